"""Grids, fields and discrete complex differential operators."""

from .charts import Axis, ChartError, GridChart
from .fields import (
    MARGIN_FLOOR,
    METRIC_TENSOR_SCALE,
    CurvatureField,
    DegenerateMetricError,
    FieldError,
    Form11Field,
    MetricField,
    ScalarField,
    read_field,
    write_field,
)
from .operators import (
    PositivityError,
    ResolutionWarning,
    closedness_defect,
    curvature_norm,
    curvature_tensor,
    ddbar,
    first_chern_form,
    integrate,
    log_ma_density,
    ma_density,
    ma_excess,
    metric_laplacian,
    positivity_margin,
    potential_curvature_norm,
    ricci_form,
    volume,
)
