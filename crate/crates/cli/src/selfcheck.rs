use pblab_core::oracle::run_oracle_suite;
use pblab_core::{i_delta_eval, i_kl_exact, CatoniComparator, KlComparator};

const ORACLE_TOLERANCE: f64 = 2e-6;

/// Prints one line per check; returns whether all passed.
pub fn run(cases: usize, seed: u64) -> anyhow::Result<bool> {
    let mut ok = true;
    let mut line = |name: &str, passed: bool, detail: String| {
        ok &= passed;
        println!("{} {name}: {detail}", if passed { "ok  " } else { "FAIL" });
    };

    for r in run_oracle_suite(seed, cases) {
        let detail = format!("{} cases, max abs error {:e}", r.cases, r.max_abs_error);
        let passed = r.passed(ORACLE_TOLERANCE);
        if !passed {
            log::warn!("worst case for {}: {}", r.name, r.worst_case);
        }
        line(r.name, passed, detail);
    }

    let mut worst: f64 = 0.0;
    for beta in [0.5, 1.0, 2.0, 5.0] {
        for n in [10, 30] {
            worst = worst.max((i_delta_eval(&CatoniComparator { beta }, n, 1e-4)?.value - 1.0).abs());
        }
    }
    line("catoni moment", worst <= 1e-3, format!("max |I - 1| {worst:e}"));

    let mut worst: f64 = 0.0;
    for n in [2, 5, 30] {
        worst = worst.max((i_delta_eval(&KlComparator, n, 1e-4)?.value / i_kl_exact(n) - 1.0).abs());
    }
    line("kl moment", worst <= 1e-6, format!("max relative error {worst:e}"));
    Ok(ok)
}
