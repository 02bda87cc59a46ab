"""Template adaptation for set-based face verification and identification."""

from .core import (Gallery, MediaEncoding, MediaRecord, Template,
                   TemplateEncoding, baseline_similarity, encode_media,
                   encode_template)
from .svm import (LinearClassifier, SvmProblem, functional_margin,
                  geometric_margin, rebalance_weights, train)
from .adapt import (AdaptedClassifier, FusionStrategy, FusionVariant,
                    adapt_gallery, adapt_probe, score_search,
                    score_verification_pairs, similarity)
from .negsets import (NegativePool, NegativeSource, build_external_pool,
                      build_training_pool, union_pool)
from .metrics import (CurvePoint, PairScores, ScoreMatrix, aggregate_splits,
                      bucket_by_template_size, cmc, det_1n, operating_point,
                      roc_11)
from .synth import SynthConfig, brute_force_svm, generate

__version__ = "0.1.0"
