"""Dialogue-act tracking: n-gram prediction, finite-state validation and plan recognition."""

from .corpus import Corpus, Dialogue, Turn, act_sequences, parse_corpus, read_corpus, write_corpus
from .errors import DialactError
from .memory import DialogueMemory
from .model import ActInventory, DialogueMachine, keywords_for, load_default_model, load_model, validate_act
from .planner import PlanRecognizer, load_default_operators, load_operators
from .predictor import InterpolationWeights, NGramTables, Predictor, estimate_weights, train
from .session import Session, replay

__version__ = "0.1.0"
