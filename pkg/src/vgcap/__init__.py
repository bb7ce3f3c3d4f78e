"""vgcap: electrostatics, surface-loss participation, and TLS loss-model
fitting for vacuum-gap capacitor circuits."""

__version__ = "0.1.0"

from .circuits import (
    ResonatorLC,
    TransmonParams,
    capacitance_for_frequency,
    capacitance_from_charging_energy,
    charging_energy,
    lc_frequency,
    photon_number,
    q_from_t1,
    q_per_area,
    q_per_area_um2,
    transmon_frequency,
)
from .errors import (
    ConfigError,
    DegenerateFit,
    GridTooCoarse,
    Infeasible,
    InvalidMap,
    InvalidSpec,
    NoConvergence,
    NoResonanceFound,
    SingularJacobian,
    VgcapError,
)
from .fieldsolver import (
    FieldSolution,
    ParticipationReport,
    SurfaceSensitivities,
    ThinLayerSpec,
    ZeroPointField,
    capacitance,
    participation,
    participation_report,
    read_field_dump,
    solve_potential,
    surface_sensitivity,
    thin_layer_participation,
    write_field_dump,
    zero_point_field,
)
from .fitting import (
    Dataset,
    DecayFit,
    FitResult,
    ResonanceTrace,
    fit_coherent_tls,
    fit_decay,
    fit_loss_tangent,
    fit_nls,
    fit_power_sweep,
    fit_s11,
    s11_model,
)
from .geometry import (
    GeometrySpec,
    InterfaceClass,
    InterfaceSet,
    Material,
    MaterialLabel,
    RegionMap,
    Variant,
    build_cross_section,
    extract_interfaces,
)
from .lossmodels import (
    CoherentTlsModel,
    DoubleExpModel,
    LossBudget,
    LossChannel,
    TlsPowerModel,
    decay_population,
    model_from_json,
    model_to_json,
    q_coherent_tls,
    q_tls_budget,
    q_total,
    solve_unknown_tan_delta,
)
