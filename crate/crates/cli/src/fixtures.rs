//! Bundled example configurations. A user config selects one with
//! `builtin = "<name>"` and may override any section.

/// TOML source of a named builtin.
pub fn builtin_toml(name: &str) -> Option<&'static str> {
    Some(match name {
        "golden2d" => GOLDEN2D,
        "golden2d_even" => GOLDEN2D_EVEN,
        "resonant2d" => RESONANT2D,
        "goldenbox" => GOLDENBOX,
        "goldenbox_small" => GOLDENBOX_SMALL,
        "transport1d" => TRANSPORT1D,
        "forced1d" => FORCED1D,
        _ => return None,
    })
}

pub fn builtin_names() -> &'static [&'static str] {
    &[
        "golden2d",
        "golden2d_even",
        "resonant2d",
        "goldenbox",
        "goldenbox_small",
        "transport1d",
        "forced1d",
    ]
}

/// Golden-pair frequency, perturbation 1e-3·(sin(θ₁+θ₂), cos θ₁).
const GOLDEN2D: &str = r#"
seed = 42

[scheme]
dim = 2
gamma = 0.01
k0 = 8

[problem]
xi = [1.0, 1.618033988749895]

[[problem.modes]]
k = [1, 1]
sin = [0.001, 0.0]

[[problem.modes]]
k = [1, 0]
cos = [0.0, 0.001]

[verify]
rotation_t = 10000.0
rotation_dt = 0.01
flow_t = 100.0
flow_dt = 0.01
theta0 = [0.0, 0.0]
eps_ladder = [0.001, 0.0001, 0.00001]
lipschitz_ladder = [1.0, 0.1, 0.01]

[[verify.delta_modes]]
k = [0, 1]
cos = [0.000001, 0.0]

[output]
dir = "out"
"#;

/// Even (reversible) perturbation: pure cosines.
const GOLDEN2D_EVEN: &str = r#"
seed = 42

[scheme]
dim = 2
gamma = 0.01
k0 = 8

[problem]
xi = [1.0, 1.618033988749895]

[[problem.modes]]
k = [1, 1]
cos = [0.001, 0.0]

[[problem.modes]]
k = [1, 0]
cos = [0.0, 0.001]

[output]
dir = "out"
"#;

/// Exactly resonant frequency (1, 1): excluded at step 0.
const RESONANT2D: &str = r#"
seed = 42

[scheme]
dim = 2
gamma = 0.01
k0 = 8

[problem]
xi = [1.0, 1.0]

[[problem.modes]]
k = [1, 1]
sin = [0.001, 0.0]

[output]
dir = "out"
"#;

/// Measure sweep: 1681 low-discrepancy points on [1,2]², γ ladder.
const GOLDENBOX: &str = r#"
seed = 7

[scheme]
dim = 2
gamma = 0.01
k0 = 8

[grid]
lo = [1.0, 1.0]
hi = [2.0, 2.0]
sampling = "low-discrepancy"
samples = 1681
gammas = [0.04, 0.02, 0.01]

[problem]
xi = [1.5, 1.5]

[[problem.modes]]
k = [1, 1]
sin = [0.0001, 0.0]

[[problem.modes]]
k = [1, 0]
cos = [0.0, 0.0001]

[output]
dir = "out"
"#;

/// Reduced sweep for quick determinism checks.
const GOLDENBOX_SMALL: &str = r#"
seed = 7

[scheme]
dim = 2
gamma = 0.01
k0 = 8

[grid]
lo = [1.0, 1.0]
hi = [2.0, 2.0]
sampling = "low-discrepancy"
samples = 121
gammas = [0.04, 0.01]

[problem]
xi = [1.5, 1.5]

[[problem.modes]]
k = [1, 1]
sin = [0.0001, 0.0]

[output]
dir = "out"
"#;

/// 1-d transport with golden drift: ∂t u + (ζ + a₀(ωt, x)) ∂x u = 0.
const TRANSPORT1D: &str = r#"
seed = 3

[scheme]
dim = 2
gamma = 0.01
k0 = 8

[transport]
omega = [1.0]
zeta = [1.618033988749895]
t_max = 100.0
t_steps = 51
s_list = [0.0, 1.0, 2.0]
resolution = 64

[[transport.a0_modes]]
k = [1, 1]
cos = [0.001]

[[transport.u0_modes]]
k = [1]
cos = [1.0]

[[transport.u0_modes]]
k = [2]
sin = [0.5]

[output]
dir = "out"
"#;

/// Forced equation with ζ = m₀(ω) ≡ 1 and a single-mode forcing.
const FORCED1D: &str = r#"
seed = 5

[scheme]
dim = 2
gamma = 0.01
k0 = 8

[transport]
omega = [1.618033988749895]
m0 = [1.0]

[[transport.a0_modes]]
k = [1, 1]
cos = [0.001]

[[transport.f_modes]]
k = [1, -1]
cos = [1.0]

[output]
dir = "out"
"#;
