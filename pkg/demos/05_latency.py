"""
Per-stage latency against a 15 fps budget
=========================================

Time every stage of the pipeline on 50,000-event VGA chunks and compare the
median per-chunk total with 1/15 s.
"""

from evrpn.bench import run_bench, synthetic_chunk
from evrpn.cluster import ProposalConfig
from evrpn.events import SensorGeometry

geometry = SensorGeometry(640, 480)
chunks = [synthetic_chunk(geometry, 50_000, seed=k, chunk_index=k) for k in range(6)]

report = run_bench(chunks, geometry, ProposalConfig(), budget_us=66_667, repetitions=5)
print(report.format_table())

# Denser chunks: how far is there to go before the budget is hit?
for n in (100_000, 200_000, 400_000):
    heavy = [synthetic_chunk(geometry, n, seed=k, chunk_index=k) for k in range(3)]
    r = run_bench(heavy, geometry, repetitions=3)
    print(f"{n:7,d} events/chunk: median {r.per_chunk_total.median_us:8,.0f} us  {'PASS' if r.passed else 'FAIL'}")
