from .tokenizer import Tokenizer, PAD, SOS, EOS, UNK
from .metrics import cer, corpus_cer, levenshtein
from .model import (AsrConfig, AttentionConfig, attend, build_asr_model,
                    decode_train, desk_asr_config, encode, encoder_length,
                    greedy_decode, paper_asr_config)
from .train import TrainSettings, train_asr

__all__ = [
    "Tokenizer", "PAD", "SOS", "EOS", "UNK",
    "cer", "corpus_cer", "levenshtein",
    "AsrConfig", "AttentionConfig", "attend", "build_asr_model",
    "decode_train", "desk_asr_config", "encode", "encoder_length",
    "greedy_decode", "paper_asr_config",
    "TrainSettings", "train_asr",
]
