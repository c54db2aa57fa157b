"""Joint punctuation and truecasing restoration for lowercased ASR text."""

__version__ = "0.1.0"

from .corpus import (  # noqa: E402
    CaseLabel,
    LabeledSequence,
    LabeledToken,
    MixedCaseLexicon,
    PunctLabel,
    build_mixedcase_lexicon,
    derive_labels,
    realize,
    split_corpus,
)
from .inference import Predictor, chunk, merge, predict  # noqa: E402
from .model import EncoderConfig, PunctCaseModel, joint_loss, truncate  # noqa: E402
from .robustness import align, augment_nbest, restore_case, restore_punct, wer_filter_split  # noqa: E402
from .tokenizer import Vocabulary, encode_sequence, encode_word, train_subword, word_vocab  # noqa: E402
