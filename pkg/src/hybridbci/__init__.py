"""Eye-brain hybrid intention decoding: EEG epochs fused with fixation dwell
times, classified by linear discriminants, evaluated offline and in
pseudo-online replay."""

__version__ = "0.1.0"
