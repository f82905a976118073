use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sbl_lagrangian::discovery::discover;
use sbl_lagrangian::exec;
use sbl_lagrangian::sbl::Hyperparameters;
use sbl_lagrangian::sweep::{noise_sweep, SWEEP_FORMULATION};
use sbl_lagrangian::systems::*;
use sbl_lagrangian::transforms::posterior_predict_band;

const MODES: [(&str, bool); 2] = [("sequential", false), ("parallel", true)];

fn bench_discover(c: &mut Criterion) {
    let mut g = c.benchmark_group("discover");
    g.sample_size(10);
    for name in [SystemName::Chain3Dof, SystemName::StringWave] {
        let spec = SystemSpec::paper(name);
        let d = simulate(&spec).unwrap();
        let cfg = preset_dictionary(name);
        let hp = Hyperparameters::default();
        for (mode, par) in MODES {
            g.bench_with_input(BenchmarkId::new(mode, name), &d, |b, d| {
                exec::set_parallel(par);
                b.iter(|| black_box(discover(d, &cfg, &hp).unwrap()))
            });
        }
    }
    g.finish();
}

fn bench_band(c: &mut Criterion) {
    let spec = SystemSpec::paper(SystemName::Chain3Dof);
    let d = simulate(&spec).unwrap();
    let dl = discover(&d, &preset_dictionary(spec.name), &Hyperparameters::default()).unwrap();
    let t = d.as_trajectory().unwrap();
    let x0: Vec<f64> = t.states.row(0).iter().copied().collect();
    let v0: Vec<f64> = t.velocities.row(0).iter().copied().collect();
    let mut g = c.benchmark_group("posterior_band");
    g.sample_size(10);
    for (mode, par) in MODES {
        g.bench_function(mode, |b| {
            exec::set_parallel(par);
            b.iter(|| black_box(posterior_predict_band(&dl, &x0, &v0, 1.0, 1e-3, 10, 64, 1).unwrap()))
        });
    }
    g.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let specs = [SystemSpec::paper(SystemName::DuffingCq), SystemSpec::paper(SystemName::PenningTrap)];
    let hp = Hyperparameters::default();
    let mut g = c.benchmark_group("noise_sweep");
    g.sample_size(10);
    for (mode, par) in MODES {
        g.bench_function(mode, |b| {
            exec::set_parallel(par);
            b.iter(|| black_box(noise_sweep(&specs, &[0.0, 0.02], &[1, 2], SWEEP_FORMULATION, &hp).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_discover, bench_band, bench_sweep);
criterion_main!(benches);
