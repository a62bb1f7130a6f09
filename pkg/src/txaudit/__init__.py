"""Audit blockchain transaction ordering against fee-rate prioritization norms."""

from .model import Block, Dataset, MempoolSnapshot, Transaction, TxIn, TxOut, validate_dataset

__all__ = ["Block", "Dataset", "MempoolSnapshot", "Transaction", "TxIn", "TxOut",
           "validate_dataset"]
__version__ = "0.1.0"
