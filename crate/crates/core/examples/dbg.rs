use multihawkes::pipeline::{Granularity, PipelineConfig, Strategy};
use multihawkes::{run_strategy, simulate_dataset, KernelBasis, OptConfig, SimConfig};
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eta: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5e-4);
    let eta_b: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(60);
    let seeds: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(6);
    let basis = KernelBasis::single_exponential(1.0).unwrap();
    let mut wins = [0u32; 5];
    for seed in 0..seeds {
        let sim = SimConfig { seed, ..SimConfig::default() };
        let (truth, data) = simulate_dataset(&sim).unwrap();
        let opt = OptConfig { eta, eta_decay: true, epochs, tol: 0.0, seed, ..OptConfig::default() };
        let mk = |strategy, k: Option<usize>, o: &OptConfig| PipelineConfig {
            opt: o.clone(), strategy, basis: basis.clone(),
            granularity: k.map(Granularity::MaxSize),
            outer_rounds: epochs / 2, round_tol: 0.0, stage_epochs: 1,
            truth: Some(truth.clone()),
        };
        let t0 = std::time::Instant::now();
        let init = multihawkes::pipeline::strategy_init(&data, &mk(Strategy::StocOpt, None, &opt)).unwrap();
        let init_err = multihawkes::relative_errors(&init, &truth).unwrap().1;
        let stoc = run_strategy(&data, &mk(Strategy::StocOpt, None, &opt)).unwrap();
        let bo = OptConfig { eta: eta_b, eta_decay: false, ..opt.clone() };
        let batch = run_strategy(&data, &mk(Strategy::BatchOpt, None, &bo)).unwrap();
        let s2 = run_strategy(&data, &mk(Strategy::StocOptSuperpose, Some(2), &opt)).unwrap();
        let s4 = run_strategy(&data, &mk(Strategy::StocOptSuperpose, Some(4), &opt)).unwrap();
        let aug = run_strategy(&data, &mk(Strategy::StocOptAugment, Some(2), &opt)).unwrap();
        let f = |r: &multihawkes::FitReport| r.final_err_a().unwrap();
        let (es, eb, e2, e4, ea) = (f(&stoc), f(&batch), f(&s2), f(&s4), f(&aug));
        let rm = |r: &multihawkes::FitReport| {
            let mut best = init_err;
            let mut out = vec![init_err];
            out.extend(r.records.iter().filter_map(|x| x.err_a).map(|e| { best = best.min(e); best }));
            out
        };
        let (rs, rb) = (rm(&stoc), rm(&batch));
        let dom = rs.iter().zip(&rb).all(|(s, b)| s <= &(b + 1e-9));
        let chain = e4 <= e2 && e2 <= es;
        wins[0] += chain as u32; wins[1] += (e2 <= es) as u32;
        wins[2] += (e4 <= e2) as u32; wins[3] += (ea >= e4.min(e2)) as u32; wins[4] += dom as u32;
        println!("seed {seed}: stoc {es:.4} batch {eb:.4} s2 {e2:.4} s4 {e4:.4} aug {ea:.4} chain={chain} dom={dom} ({:.1}s)", t0.elapsed().as_secs_f64());
    }
    println!("chain {}/{seeds} s2<=stoc {}/{seeds} s4<=s2 {}/{seeds} augOK {}/{seeds} dom {}/{seeds}", wins[0], wins[1], wins[2], wins[3], wins[4]);
}
