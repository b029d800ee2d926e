"""
Desk-scale MNIST comparison
===========================

Four workers with 500 training images each train the 784-256-128-64-32-16-10
MLP for 100 rounds of 5 iterations.  The largest layer (the first) is
exchanged every beta rounds; all other layers every round.

Takes a few minutes on one core.  Set ``LFGADMM_DATA_DIR`` to use a full
MNIST download instead of the bundled subset.
"""

from lfgadmm.experiment import compare_schemes, mnist_configs

comparison = compare_schemes(mnist_configs())

print(f"{'scheme':<14}{'accuracy':>10}{'energy (J)':>14}")
for label, row in comparison.summary.items():
    print(f"{label:<14}{row['final_test_accuracy']:>10.4f}{row['total_energy_J']:>14.1f}")

# Accuracy every 20 rounds
for row in comparison.rows[19::20]:
    accs = "  ".join(f"{row[f'{l}:test_accuracy']:.3f}" for l in comparison.labels)
    print(f"round {row['round']:3d}: {accs}")
