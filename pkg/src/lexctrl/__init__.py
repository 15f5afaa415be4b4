"""Sentence generation under keyword and lexical-complexity constraints."""

from .lexicon import ComplexityLevel, ComplexityLexicon, load_lexicon, read_lexicon
from .tokenizer import BpeVocab, ComplexityTable, build_complexity_table, train_bpe
from .corpus import Example, build_dataset, default_grammar, split_dataset
from .model import ModelConfig, Seq2SeqTransformer, build_model
from .decode import GenerationRequest, Generator, beam_decode, greedy_decode, masked_decode
from .rerank import rerank
from .metrics import ConstraintReport, evaluate

__version__ = "0.1.0"

__all__ = [
    "ComplexityLevel", "ComplexityLexicon", "load_lexicon", "read_lexicon",
    "BpeVocab", "ComplexityTable", "build_complexity_table", "train_bpe",
    "Example", "build_dataset", "default_grammar", "split_dataset",
    "ModelConfig", "Seq2SeqTransformer", "build_model",
    "GenerationRequest", "Generator", "beam_decode", "greedy_decode", "masked_decode",
    "rerank", "ConstraintReport", "evaluate",
]
