//! Number formatting and small file helpers shared by the subcommands.

use std::path::Path;

use anyhow::Context;

/// `x` rounded to 12 significant digits, in plain decimal notation.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Full-precision shortest round-trip decimal, used in every CSV field.
pub fn full(x: f64) -> String {
    x.to_string()
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.160_582_687_526_507_56), "0.160582687527");
        assert_eq!(sig12(2.5), "2.5");
        assert_eq!(sig12(1_234.567_890_123_45), "1234.56789012");
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(-0.000_123_456_789_012_345), "-0.000123456789012");
    }
}
