"""
KL-Descent

Inexact descent methods and their convergence analysis under the
Kurdyka-Lojasiewicz inequality.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

from .version_ import __version__  # noqa
from .base import BlockVector, CheckReport, set_logger  # noqa
from .kl_core import Desingularizer, KLRegion, kl_check  # noqa
from .metric_ops import SpdOperator, ProxOracle, prox_in_metric, hp_check  # noqa
from .descent_monitor import (  # noqa
    check_H1, check_H2, check_H2prime, check_H3, check_length_inequality,
    predict_rates, fit_rates, criticality_certificate)
from .afb_engine import (  # noqa
    BlockProblem, MetricSchedule, ErrorModel, StoppingRule, afb_step,
    afbe_step, derive_schedule, explicit_schedule, he_check, run)
from .lm_newton import LmConfig, run_lm, lm_schedule_check  # noqa
from .traces import IterateTrace, read_trace_csv, write_trace_csv  # noqa
from .run_ import run_experiment  # noqa
from .monitor_ import monitor  # noqa
from .rates_ import rates  # noqa
from .decompose_ import decompose  # noqa
from .lm_ import lm  # noqa
