#![allow(dead_code)]

use qprofile_core::compiler::{compile, CompiledJob, DeviceMap, Topology};
use qprofile_core::{build_qaoa, generate_instance, QaoaParams, ResetMode, TimingModel};
use qprofile_stack::{serve, ClusterConfig, ClusterServer, LatencyProfile};

pub fn job(n: usize, shots: u64, reset: ResetMode) -> CompiledJob {
    let g = generate_instance(n, 7).unwrap();
    let c = build_qaoa(&g, &QaoaParams::new(vec![0.4], vec![1.2]).unwrap());
    compile(&c, shots, reset, &TimingModel::default(), &DeviceMap::from_topology(&Topology::default(), n)).unwrap()
}

pub fn server(profile: LatencyProfile) -> ClusterServer {
    serve("127.0.0.1:0", ClusterConfig::with_profile(profile)).unwrap()
}

pub fn within(actual: f64, expected: f64, rel: f64) -> bool {
    (actual - expected).abs() <= rel * expected
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}
