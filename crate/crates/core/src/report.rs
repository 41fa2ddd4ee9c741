//! Text/CSV formatting shared by reports.
//!
//! All floating-point values in emitted files go through [`sig17`]
//! (17 significant digits, scientific notation), which round-trips f64
//! exactly and keeps outputs byte-stable across runs.

/// Format with 17 significant digits.
pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// FNV-1a 64-bit fingerprint, used to echo which model file a report used.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_round_trips() {
        for &v in &[0.0, 1.0, -1.5, 2.0 / 255.0, 392.0 * std::f64::consts::PI, 1e-300] {
            let s = sig17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fingerprint(b"abc"), fingerprint(b"abc"));
        assert_ne!(fingerprint(b"abc"), fingerprint(b"abd"));
    }
}
