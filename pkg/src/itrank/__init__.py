"""Rank candidate intermediate tasks for transfer learning, evaluate the
rankings against ground-truth transfer tables, and model method costs."""

from .core import (EmbeddingKind, EmbeddingSet, GainStats, Ranking, TaskMeta,
                   TaskType, TransferTable, cross_model_spearman,
                   gain_statistics, relative_gain)
from .costs import CostMethod, CostParams, calibrate_f, complexity, cost_report
from .errors import (DomainError, ItrankError, SchemaError, StructureError,
                     UnknownIdError, UnsupportedConfigError)
from .fixtures import FixtureBundle, load_fixtures
from .metrics import (AggregatedReport, MetricRow, aggregate, dcg,
                      expected_random_ndcg, expected_random_regret, metric_row,
                      ndcg, random_metric_row, regret_at_k)
from .proxies import (CvConfig, EmbeddedDataset, LabelKind, knn_cv_score,
                      linear_cv_score, proxy_rank, sample_tokens)
from .rankers import (MethodKind, MethodSpec, rank_by_cosine, rank_by_scores,
                      rank_by_size, rank_random, rrf_fuse, type_prerank)
from .taskemb import (ProbeModel, fim_diagonal, fs_taskemb_rank, loglik_grad,
                      taskemb_rank)
from .toylab import (ToyTrainConfig, ToyUniverseConfig, build_transfer_table,
                     gen_universe, run_benchmark, sequential_transfer,
                     train_probe)

__version__ = "0.1.0"
