"""Cross-iteration redundancy elimination for array computations in loop nests.

The pipeline parses a small Fortran-flavored loop-nest language, identifies
redundant array computations with a two-level reference/expression keying
scheme, extracts them hierarchically into auxiliary arrays (optionally
reassociating expression trees), generates precompute loops, contracts the
auxiliary storage, and can certify the transformation against a reference
interpreter on randomized inputs.
"""

__version__ = "0.1.0"
