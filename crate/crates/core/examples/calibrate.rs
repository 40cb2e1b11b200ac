//! Scratch harness for tuning the synthetic-reproduction experiment.

use multihawkes::pipeline::{Granularity, PipelineConfig, Strategy};
use multihawkes::{run_strategy, simulate_dataset, KernelBasis, OptConfig, SimConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eta: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let eta_batch: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-6);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(24);
    let seeds: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4);
    let decay: bool = args.get(5).map(|s| s == "decay").unwrap_or(false);

    let basis = KernelBasis::single_exponential(1.0).unwrap();
    let mut chain_wins = 0;
    let mut runmin_wins = 0;
    let mut augment_wins = 0;

    for seed in 0..seeds {
        let sim = SimConfig { seed, ..SimConfig::default() };
        let (truth, data) = simulate_dataset(&sim).unwrap();
        let opt = OptConfig {
            eta,
            eta_decay: decay,
            epochs,
            tol: 0.0,
            seed,
            ..OptConfig::default()
        };
        let mk = |strategy, k: Option<usize>, o: &OptConfig| PipelineConfig {
            opt: o.clone(),
            strategy,
            basis: basis.clone(),
            granularity: k.map(Granularity::MaxSize),
            outer_rounds: epochs / 2,
            round_tol: 0.0,
            stage_epochs: 1,
            truth: Some(truth.clone()),
        };

        let t0 = std::time::Instant::now();
        let stoc = run_strategy(&data, &mk(Strategy::StocOpt, None, &opt)).unwrap();
        let batch_opt = OptConfig { eta: eta_batch, eta_decay: false, ..opt.clone() };
        let batch = run_strategy(&data, &mk(Strategy::BatchOpt, None, &batch_opt)).unwrap();
        let s2 = run_strategy(&data, &mk(Strategy::StocOptSuperpose, Some(2), &opt)).unwrap();
        let s4 = run_strategy(&data, &mk(Strategy::StocOptSuperpose, Some(4), &opt)).unwrap();
        let aug = run_strategy(&data, &mk(Strategy::StocOptAugment, Some(2), &opt)).unwrap();
        let secs = t0.elapsed().as_secs_f64();

        let fin = |r: &multihawkes::FitReport| r.final_err_a().unwrap();
        let (e_stoc, e_batch, e_s2, e_s4, e_aug) =
            (fin(&stoc), fin(&batch), fin(&s2), fin(&s4), fin(&aug));

        // running-min domination of stoc over batch on err_a
        let runmin = |r: &multihawkes::FitReport| {
            let mut best = f64::INFINITY;
            r.records
                .iter()
                .filter_map(|rec| rec.err_a)
                .map(|e| {
                    best = best.min(e);
                    best
                })
                .collect::<Vec<f64>>()
        };
        let rm_stoc = runmin(&stoc);
        let rm_batch = runmin(&batch);
        let n = rm_stoc.len().min(rm_batch.len());
        let dominates = (0..n).all(|t| rm_stoc[t] <= rm_batch[t] + 1e-9);

        let chain = e_s4 <= e_s2 && e_s2 <= e_stoc;
        let aug_ok = e_aug >= e_s2;
        chain_wins += chain as u32;
        runmin_wins += dominates as u32;
        augment_wins += aug_ok as u32;

        println!(
            "seed {seed}: stoc {e_stoc:.4} batch {e_batch:.4} s2 {e_s2:.4} s4 {e_s4:.4} aug {e_aug:.4} | chain {chain} dom {dominates} augok {aug_ok} | {secs:.1}s"
        );
    }
    println!(
        "eta={eta} eta_batch={eta_batch} epochs={epochs} decay={decay}: chain {chain_wins}/{seeds} runmin {runmin_wins}/{seeds} augment {augment_wins}/{seeds}"
    );
}
