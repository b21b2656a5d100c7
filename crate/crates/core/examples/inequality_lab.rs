//! Randomized checks of the functional inequalities behind the entropy
//! estimate: the coercivity bound, the quartic interpolation constant, two
//! Gagliardo-Nirenberg ratios and the logarithmic Sobolev ratio.
//!
//! cargo run --release --example inequality_lab -- [seed]

use qdd::inequality::{
    eval_c0_gamma, gamma_adversarial, gamma_suite, gns_suite, logsob_suite, n2_study, GnsInstance,
    SuiteConfig,
};

fn main() -> qdd::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);

    for d in [2, 3] {
        let c = eval_c0_gamma(d, 0.05)?;
        let report = gamma_suite(&SuiteConfig::radial(d, 200, seed), 0.05)?;
        let adv = gamma_adversarial(&SuiteConfig::radial(d, 0, seed), 0.05, 20, 4000)?;
        println!(
            "d = {d}: gamma = {:.4}, violations {}/{}, worst relative margin {:.4}, adversarial {:.4}",
            c.gamma, report.violations, report.trials, report.worst_margin, adv.min_relative_margin
        );
    }

    let (report, study) = n2_study(&SuiteConfig::radial(2, 1000, seed), 0.05, 0.05)?;
    println!(
        "quartic constant: c = {:.5} (half sample {:.5}, change {:.1e}), held-out violations {}",
        report.empirical_constant, study.constant_half, study.relative_change, study.heldout_violations
    );

    for inst in [GnsInstance::SupNorm, GnsInstance::GradientL4] {
        let r = gns_suite(&SuiteConfig::radial(2, 200, seed), inst)?;
        println!(
            "{}: sup ratio {:.5}, passed {}",
            r.inequality,
            r.empirical_constant,
            r.passed()
        );
    }
    let r = logsob_suite(&SuiteConfig::slab(200, seed))?;
    println!("log-Sobolev on the slab: sup ratio {:.5}", r.empirical_constant);
    Ok(())
}
