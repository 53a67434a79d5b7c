//! Free-space wave fields: Cauchy data, Kirchhoff and Duhamel evaluation,
//! spherical means, and the forcing signal seen by the scatterer.

mod data;
mod kirchhoff;
mod radial;

pub use data::{
    BumpSpec, CauchyBundle, CustomField, Datum, FieldFn, RadialBump, SourceTerm, TimeProfile, STACK_DEPTH,
};
pub use kirchhoff::{
    duhamel_eval, duhamel_eval_lap, forcing_ball_form, forcing_signal, free_field, kirchhoff_eval, kirchhoff_eval_lap,
    origin_mean, spherical_mean, step_count, ForcingSignal,
};
pub use radial::{forcing_radial, free_field_radial, free_field_radial_lap};

/// Default order of the sphere rule used for spherical means.
pub const DEFAULT_SPHERE_ORDER: usize = 17;
