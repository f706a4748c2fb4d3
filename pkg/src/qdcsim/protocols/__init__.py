"""Protocol applications built on the QRAM, network and simulation layers."""
from .blind import blind_detection_probability, blind_select, select_oracle
from .compression import compress_single_excitation, decompress, transmit_compressed
from .multiparty import multiparty_send
from .qpq import Mode, QpqSession, Verdict, qpq_detection_probability, qpq_round, run_qpq
from .qss import QssParams, qss_encode, qss_reconstruct

__all__ = [
    "Mode",
    "QpqSession",
    "QssParams",
    "Verdict",
    "blind_detection_probability",
    "blind_select",
    "compress_single_excitation",
    "decompress",
    "multiparty_send",
    "qpq_detection_probability",
    "qpq_round",
    "qss_encode",
    "qss_reconstruct",
    "run_qpq",
    "select_oracle",
    "transmit_compressed",
]
