//! Built-in experiment configs, one per acceptance criterion.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::harness::{run, Command, RunOutcome};

#[derive(Clone, Copy, Debug)]
pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub command: Command,
    pub config: &'static str,
}

impl Recipe {
    pub fn parse(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(self.config, Path::new("."))
    }

    pub fn run(&self, out: &Path, seed: Option<u64>) -> Result<RunOutcome> {
        run(self.command, &self.parse()?, out, seed)
    }
}

pub fn recipes() -> Vec<Recipe> {
    vec![
        Recipe {
            name: "AC1-root-residuals",
            description: "characteristic roots over lambda = 1..1e8",
            command: Command::Roots,
            config: r#"[damping]
sigma = 2.0
delta = 1.0

[spectrum]
kind = "list"
values = [1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0, 1000000.0, 10000000.0, 100000000.0]
"#,
        },
        Recipe {
            name: "AC2-asymptotic-ratios",
            description: "overdamped roots up to lambda = 2^35",
            command: Command::Roots,
            config: r#"[damping]
sigma = 1.0
delta = 1.0

[spectrum]
count = 36
"#,
        },
        Recipe {
            name: "AC3-oracle-equivalence",
            description: "closed form against the exponential-integrator oracle",
            command: Command::Verify,
            config: r#"[damping]
sigma = 1.0
delta = 1.0

[verify]
trials = 5
"#,
        },
        Recipe {
            name: "AC4-gap-scan",
            description: "free-evolution amplification for sigma = 2, gap 0.5",
            command: Command::GapScan,
            config: r#"[damping]
sigma = 2.0
delta = 1.0

[spectrum]
count = 41

[grid]
t_spacing = "log"
t_start = 1e-30
t_end = 1e15
t_count = 1500

[gap]
alpha0 = 0.5
alpha1 = 0.0
"#,
        },
        Recipe {
            name: "AC5-forward-regularity",
            description: "amplification from D(A) x H into H x H for sigma = 2",
            command: Command::GapScan,
            config: r#"[damping]
sigma = 2.0
delta = 1.0

[spectrum]
count = 41

[grid]
t_spacing = "log"
t_start = 1e-30
t_end = 1e15
t_count = 1500

[gap]
alpha0 = 1.0
alpha1 = 0.0
"#,
        },
        Recipe {
            name: "AC6-boundedness-diagram",
            description: "growth verdicts for sigma in {1, 2} under uniform constant forcing",
            command: Command::Diagram,
            config: r#"[damping]
sigma = 2.0
delta = 1.0

[spectrum]
count = 48
scale = 0.5

[forcing]
kind = "constant"
amplitude = 0.14433756729740643

[grid]
t_spacing = "log"
t_start = 1.0
t_end = 1e4
t_count = 200
alphas = [0.9, 1.0, 1.5, 1.9]
sigmas = [1.0, 2.0]
"#,
        },
        Recipe {
            name: "AC7-blowup-constants",
            description: "window forcing losing D(A^sigma0) x D(A^sigma1) at t = 1",
            command: Command::Counterexample(2),
            config: r#"[damping]
sigma = 0.5
delta = 1.0

[spectrum]
count = 48

[counterexample]
targets = [1.0]
"#,
        },
        Recipe {
            name: "AC8-resonant-forcing",
            description: "resonant forcing leaving D(A^(1/2+e)) x D(A^e) at t = 0.5 and t = 1",
            command: Command::Counterexample(1),
            config: r#"[damping]
sigma = 0.0
delta = 1.0

[spectrum]
count = 48
scale = 2.0

[counterexample]
targets = [0.5, 1.0]
"#,
        },
        Recipe {
            name: "AC9-unbounded-growth",
            description: "threshold sequence with |Au(t_n)|^2 >= n under |f| <= 1",
            command: Command::Counterexample(4),
            config: r#"[damping]
sigma = 2.0
delta = 1.0

[counterexample]
stages = 4
ramp_fraction = 1e-3
first = 2.0
ratio = 2.0
"#,
        },
        Recipe {
            name: "AC10-energy-inequality",
            description: "energy margin over seeded random forcings",
            command: Command::Verify,
            config: r#"[damping]
sigma = 1.0
delta = 1.0

[verify]
trials = 100
modes = 16
"#,
        },
        Recipe {
            name: "AC11-periodic-forcing",
            description: "response to a smoothed square wave, lambda = 2^1..2^20",
            command: Command::Simulate,
            config: r#"[damping]
sigma = 2.0
delta = 1.0

[spectrum]
count = 20
scale = 2.0

[forcing]
kind = "square_wave"
period = 1.0
ramp = 0.1

[grid]
t_end = 8.0
t_count = 161
alphas = [0.0, 1.0]
"#,
        },
    ]
}

pub fn find(name: &str) -> Option<Recipe> {
    recipes().into_iter().find(|r| r.name == name || r.name.split('-').next() == Some(name))
}
