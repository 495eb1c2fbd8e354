"""Type classes with coherent explicit dictionary application.

A typechecker and System F elaborator for a minimal functional language
with single-parameter type classes, an evidence-producing constraint
solver, a safety check for explicit dictionary application, and a harness
that tests coherence by comparing erased beta-eta normal forms of
alternative elaborations.
"""

__version__ = "0.1.0"
