"""
Test suite for the DORE simulator

Test files:
- test_compression.py: Compressors, bit costs, variance constants, trit codec
- test_problems.py: Datasets, gradient oracles, prox, constants, reference optimum
- test_hyperparams.py: Default hyperparameters and convergence conditions
- test_methods.py: Per-round method steppers and exact method reductions
- test_simulator.py: Trace layout, determinism, divergence, bit summaries
- test_storage.py: CSV traces and manifest sidecars
- test_harness.py: Presets, config parsing, comparisons, summaries
- test_cli.py: Command-line verbs and exit codes
- test_api.py: Comparison job API (in-process TestClient)
- test_acceptance.py: Long preset runs (marked slow)
"""
