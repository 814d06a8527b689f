"""Exact-arithmetic engine for universal lower-bounded twisted modules
over free-field graded vertex algebras, with formal log variables and a
symbolic 2 pi i."""

__version__ = "0.1.0"
