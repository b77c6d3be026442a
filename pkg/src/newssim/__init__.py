"""Seven-dimension news-article pair similarity engine."""

from ._kernels import backend_name
from .corpus import (
    ArticleRecord,
    DatasetSplit,
    FetchPolicy,
    LoadReport,
    NormalizedPair,
    PairRecord,
    extract_article,
    fetch_article,
    load_article,
    load_pairs,
    normalize_pair,
    normalize_score,
    remove_stopwords,
    split_dataset,
    store_article,
)
from .embedding import (
    CacheProvider,
    StubProvider,
    baseline_score,
    concat,
    cosine_similarity,
    embed_bundle,
    mean_pool,
    read_cache,
    truncate_tokens,
    write_cache,
)
from .evaluation import (
    EvalReport,
    build_report,
    pearson,
    tolerance_accuracy,
)
from .features import (
    Entity,
    FeatureBundle,
    GazetteerNer,
    MetricKind,
    extract_features,
    feature_cache_key,
)
from .model import (
    MomentumState,
    RegressionHead,
    TrainConfig,
    backward,
    forward,
    init_head,
    load_head,
    mse_loss,
    predict_pair,
    save_head,
    sgd_momentum_step,
    train,
)

__version__ = "0.1.0"
