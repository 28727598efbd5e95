use num_traits::{Float, FromPrimitive};
use serde::Serialize;

/// Floating-point type used for entropy values.
pub trait Real:
    Float + FromPrimitive + Serialize + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts")
    }

    fn of_count(n: u64) -> Self {
        Self::from_u64(n).expect("integer converts")
    }

    fn of_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer converts")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {}
impl Real for f32 {}
