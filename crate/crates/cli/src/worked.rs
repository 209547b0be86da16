use clap::Args;

use pblab_core::delta_optimizer::QUOTED_HALFRISK_KL_VALUE;
use pblab_core::worked_example;

use crate::invalid;
use crate::output::sig12;

#[derive(Args, Debug)]
pub struct WorkedArgs {
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// KL values, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,100")]
    pub kls: Vec<f64>,
    /// Weights matching `--kls`; equal weights when omitted.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
}

pub fn run(a: &WorkedArgs) -> anyhow::Result<()> {
    let weights = if a.weights.is_empty() { vec![1.0; a.kls.len()] } else { a.weights.clone() };
    if weights.len() != a.kls.len() {
        return Err(invalid(format!("{} weights given for {} KL values", weights.len(), a.kls.len())));
    }
    let atoms: Vec<(f64, f64)> = a.kls.iter().copied().zip(weights.iter().copied()).collect();
    let w = worked_example(&atoms, a.n, a.delta)?;
    let r = &w.analytics;
    println!("u {}", sig12(r.u));
    println!("optimal_catoni {}", sig12(r.optimal_catoni));
    println!("beta_star {}", sig12(r.beta_star));
    println!("conjectured {}", sig12(r.conjectured));
    println!("phi_entropy_gap {}", sig12(r.phi_entropy_gap));
    println!("pac_bayes_kl_exact {}", sig12(w.pac_bayes_kl_exact));

    let defaults = a.kls == [1.0, 100.0] && weights[0] == weights[1] && a.n == 30 && a.delta == 0.1;
    if defaults && w.quoted_value_inconsistent {
        eprintln!(
            "warning: the quoted expected PAC-Bayes-kl value {QUOTED_HALFRISK_KL_VALUE} for this example is below \
             the conjectured lower bound {}, so it cannot be an expected PAC-Bayes-kl bound; the value computed here is {}",
            sig12(r.conjectured),
            sig12(w.pac_bayes_kl_exact)
        );
    }
    Ok(())
}
