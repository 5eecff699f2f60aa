"""Markov logic networks for multimodal clinical diagnosis."""

from .errors import (ConfigError, EvidenceError, ExtractionError, MetricsError, MMLNError,
                     ModelError, NumericalError, ParseError)
from .grounding import (EvidenceDB, GroundingTable, Provenance, World, closed_world_complete,
                        count_true_groundings, ground_formulas)
from .inference import (InferenceConfig, MarginalResult, Method, exact_marginal, gibbs_marginal,
                        infer_batch)
from .learning import (LearnConfig, LearnResult, TrainingSet, build_training_set, learn_weights,
                       pll_gradient, pseudo_log_likelihood)
from .logic import (Atom, Literal, Model, PredicateSchema, Role, Term, WeightedFormula,
                    format_model, load_model, parse_model, validate_model)

__version__ = "0.1.0"
