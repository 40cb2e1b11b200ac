use multihawkes::pipeline::{PipelineConfig, Strategy};
use multihawkes::{run_strategy, simulate_dataset, KernelBasis, OptConfig, SimConfig};
fn main() {
    let basis = KernelBasis::single_exponential(1.0).unwrap();
    let sim = SimConfig { seed: 0, ..SimConfig::default() };
    let (truth, data) = simulate_dataset(&sim).unwrap();
    let mk = |strategy, o: &OptConfig| PipelineConfig {
        opt: o.clone(), strategy, basis: basis.clone(), granularity: None,
        outer_rounds: 1, round_tol: 0.0, stage_epochs: 1, truth: Some(truth.clone()),
    };
    for (name, eta, decay, strategy) in [
        ("stoc5e-4", 5e-4, true, Strategy::StocOpt),
        ("stoc1e-3", 1e-3, true, Strategy::StocOpt),
        ("batch1e-4", 1e-4, false, Strategy::BatchOpt),
        ("batch3e-5", 3e-5, false, Strategy::BatchOpt),
    ] {
        let o = OptConfig { eta, eta_decay: decay, epochs: 60, tol: 0.0, seed: 0, ..OptConfig::default() };
        let r = run_strategy(&data, &mk(strategy, &o)).unwrap();
        let errs: Vec<String> = r.records.iter().map(|x| format!("{:.3}", x.err_a.unwrap())).collect();
        println!("{name}: {}", errs.join(" "));
    }
}
