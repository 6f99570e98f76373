from .features import FeatureConfig, FeatureIndex, build_feature_index, extract_features, word_shape
from .model import (
    Batch,
    CrfModel,
    forward_backward,
    forward_backward_scores,
    nll_and_gradient,
    path_score,
    viterbi,
    viterbi_scores,
)
from .owlqn import minimize_owlqn, pseudo_gradient
from .train import (
    Prepared,
    SearchResult,
    TrainOptions,
    document_examples,
    document_features,
    fit,
    prepare,
    random_search,
    sample_trials,
    tag_crf,
    train,
    train_documents,
)
