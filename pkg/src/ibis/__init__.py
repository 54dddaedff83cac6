"""Inception + BiLSTM + attention activity recognition with SVM refinement and antenna fusion."""

__version__ = "0.1.0"
