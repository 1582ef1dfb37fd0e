//! Fixed float formatting shared by every CSV writer.

/// Formats with 17 significant digits so that every `f64` round-trips.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // normalise -0.0 so output bytes do not depend on the sign of zero
        return format!("{:.16e}", 0.0);
    }
    format!("{:.16e}", x)
}
