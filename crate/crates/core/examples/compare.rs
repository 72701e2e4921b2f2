//! Runs PDM, TMM and FPM on one noisy synthetic image and prints a summary.
//!
//! `cargo run --release --example compare -- [size] [lambda] [alpha]`

use minsurf::degrade::{degrade, normalize, DegradeSpec};
use minsurf::metrics::{snr, ssim, SsimParams};
use minsurf::solvers::solve;
use minsurf::synthetic::{generate, Pattern};
use minsurf::{BlurSpec, Method, ModelParams, SolverConfig, Spectrum, StopRule};

fn main() -> minsurf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |k: usize, default: f64| {
        args.get(k)
            .map_or(default, |s| s.parse().expect("numeric argument"))
    };
    let n = arg(0, 128.0) as usize;
    let (lambda, alpha) = (arg(1, 0.14), arg(2, 0.01));

    let clean = normalize(&generate(Pattern::Shapes, n, n)?)?;
    let spec = DegradeSpec {
        noise_sigma: 10.0,
        blur: BlurSpec::Identity,
        seed: 1,
    };
    let f = degrade(&spec, &clean)?;
    let spectrum = Spectrum::identity(n, n)?;
    let config =
        SolverConfig::new(ModelParams::new(lambda, alpha)?)?.with_stop(StopRule::new(1e-5, 2000)?);
    let q = SsimParams::default();
    println!(
        "input  SNR {:7.3} dB  SSIM {:.4}",
        snr(&clean, &f)?,
        ssim(&clean, &f, &q)?
    );
    for method in [Method::Pdm, Method::Tmm, Method::Fpm] {
        if alpha == 0.0 && method != Method::Pdm {
            continue;
        }
        let r = solve(method, &config, &spectrum, &f)?;
        println!(
            "{method:<5}  SNR {:7.3} dB  SSIM {:.4}  {:5} it  converged={}  {:.3}s",
            snr(&clean, r.final_u())?,
            ssim(&clean, r.final_u(), &q)?,
            r.iterations,
            r.converged,
            r.wall_time_seconds
        );
    }
    Ok(())
}
