"""Panel ARX forecasting of hospital census from employee symptom attestations."""

__version__ = "0.1.0"

from .errors import (
    AttestcastError,
    ConfigError,
    DataError,
    MomentConditionError,
    NumericalError,
    RankDeficiencyError,
)
from .evaluate import EvalReport, describe_panel, evaluate_forecasts, format_table, mae, wmape
from .forecast import (
    ExogenousPolicy,
    ForecastSet,
    doubling_report,
    forecast_panel,
    forecast_unit,
    interpret_doubling,
    persistence_forecast,
    rolling_origin_forecast,
)
from .granger import GrangerResult, dh_test, dh_test_weekly
from .ingest import PanelDataset, ZipMap, aggregate_weekly, build_panel, load_attestations, load_census, load_zip_map
from .linmod import ModelSpec, PanelFit, UnitFit, bic, fit_panel, fit_unit, ols, select_lag
from .oracle import SuiteConfig, SuiteReport, run_oracle_suite
from .preprocess import TransformSpec, TransformedPanel, moving_average, log_transform, split_train_holdout, transform_panel
from .simulate import SimConfig, SimTruth, network_scale_config, simulate_panel
