"""Data- and objective-side tooling for shared-network video-text pre-training."""

__version__ = "0.1.0"

from snps3.kernels import BACKEND  # noqa: E402
from snps3.tokenizer import Vocab, TokenSeq, load_vocab, wordpiece_tokenize, token_to_label  # noqa: E402
from snps3.miner import (  # noqa: E402
    ChosenList,
    FrequencyTable,
    PosRecord,
    SignificantVocab,
    build_chosen_list,
    count_significant,
    lexicon_pos_tag,
    threshold_topk,
)
from snps3.planner import Action, MaskingPlan, plan_mlm, plan_mssm, sample_lvwm  # noqa: E402
from snps3.losses import LossResult, gvtm_free, gvtm_scored, lvwm, masked_ce, mlp_score, total_loss  # noqa: E402
from snps3.gradcheck import grad_check  # noqa: E402
from snps3.retrieval import RetrievalMetrics, eval_retrieval  # noqa: E402

__all__ = [
    "BACKEND", "Vocab", "TokenSeq", "load_vocab", "wordpiece_tokenize", "token_to_label",
    "ChosenList", "FrequencyTable", "PosRecord", "SignificantVocab", "build_chosen_list",
    "count_significant", "lexicon_pos_tag", "threshold_topk",
    "Action", "MaskingPlan", "plan_mlm", "plan_mssm", "sample_lvwm",
    "LossResult", "gvtm_free", "gvtm_scored", "lvwm", "masked_ce", "mlp_score", "total_loss",
    "grad_check", "RetrievalMetrics", "eval_retrieval",
]
