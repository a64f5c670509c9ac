from .checkpoint import (
    decode_tensors,
    encode_tensors,
    load_checkpoint,
    load_classifier,
    load_encoder_decoder,
    save_checkpoint,
)
from .models import (
    ClassifierConfig,
    ClassifierParams,
    EncoderDecoderConfig,
    EncoderDecoderParams,
    build_classifier,
    build_encoder_decoder,
    clf_backward,
    clf_features,
    clf_logits,
    clf_logits_cached,
    clf_predict,
    copy_clf,
    copy_ed,
    ed_backward,
    ed_forward,
    ed_forward_cached,
)
from .train import (
    VARIANTS,
    EvalReport,
    TrainConfig,
    TrainHistory,
    baseline_mse,
    ed_mse,
    ed_predict,
    evaluate_classifier,
    report_from_predictions,
    train_classifier,
    train_encoder_decoder,
    variant_inputs,
)

__all__ = [
    "VARIANTS", "ClassifierConfig", "ClassifierParams", "EncoderDecoderConfig",
    "EncoderDecoderParams", "EvalReport", "TrainConfig", "TrainHistory", "baseline_mse",
    "build_classifier", "build_encoder_decoder", "clf_backward", "clf_features", "clf_logits",
    "clf_logits_cached", "clf_predict", "copy_clf", "copy_ed", "decode_tensors", "ed_backward",
    "ed_forward", "ed_forward_cached", "ed_mse", "ed_predict", "encode_tensors",
    "evaluate_classifier", "load_checkpoint", "load_classifier", "load_encoder_decoder",
    "report_from_predictions", "save_checkpoint", "train_classifier", "train_encoder_decoder",
    "variant_inputs",
]
