"""Multiple-choice QA transfer learning with MemN2N and QACNN."""

__version__ = "0.1.0"
