"""Random feature schemes for compositional kernels on computation skeletons."""

from .base_spaces import (Binary, Categorical, Circle, Gaussian, SphereCoordPair,
                          SphereProjection, base_kernel, eval_base_feature, sample_base_param)
from .bench import (ApproxReport, BudgetRule, coverage_check, hoeffding_budget,
                    run_approx_experiment, synth_inputs)
from .embedding import Embedding, SkeletonFeatureMap, embed, empirical_kernel, eval_feature
from .exceptions import (ConvergenceError, DomainError, ParameterError, RFSSError,
                         StructuralError, UnsupportedSpaceError, UsageError)
from .features import (FeatureExpr, FeatureRegistry, build_registry, cooccurrence_matrix,
                       load_registry, rfss_sample, save_registry, sparsity_stats)
from .inputs import InputBatch, InputRecord
from .kernel_oracle import enumerate_kernel, exact_kernel, kernel_matrix, mc_kernel
from .learner import (FeatureLinearClassifier, FeatureRidgeRegressor, LinearModel, TrainConfig,
                      evaluate, rate_experiment, train)
from .random import RandomStream
from .skeleton import (ConjugateActivation, InternalNode, Skeleton, complexity, layered, local,
                       relu_conjugate_coeffs, sample_degree, shallow, sigma_prime_at_one, validate)

__version__ = "0.1.0"
