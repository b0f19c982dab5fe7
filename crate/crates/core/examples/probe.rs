use std::time::Instant;
use dkws_core::gen::{erdos_renyi, pref_attach, sample_queries};
use dkws_core::graph::Query;
use dkws_core::partition::partition_hash;
use dkws_core::runtime::{run_query, RunConfig, SelectorMode, Variant};
use dkws_core::sketch::SketchSet;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    if v.is_empty() { return 0.0 }
    v[v.len() / 2]
}

fn main() {
    let t_total = Instant::now();
    let graphs = vec![
        ("er100", erdos_renyi(100, 4.0, 20, 1.0, 101)),
        ("er1000", erdos_renyi(1000, 4.0, 20, 1.0, 42)),
        ("pa100", pref_attach(100, 2, 20, 1.0, 101)),
        ("pa1000", pref_attach(1000, 2, 20, 1.0, 42)),
    ];
    let queries_per_config = 10;
    let mut visited: Vec<(Variant, f64)> = Vec::new();
    let mut bytes: Vec<(Variant, f64)> = Vec::new();
    let mut runs = 0u64;
    for (_name, g) in &graphs {
        for m in [1usize, 2, 4, 8] {
            let frags = partition_hash(g, m, 7).unwrap();
            let sk = SketchSet::build(g, 4, Some(&frags));
            for size in 2..=6usize {
                for tau in [2.0, 3.0] {
                    for k in [5usize, 10] {
                        let qs = sample_queries(g, size, queries_per_config,
                            0x5eed ^ (size as u64) << 8 ^ (tau as u64) << 16 ^ (k as u64) << 24);
                        for kws in qs {
                            let q = Query::new(kws, tau, k).unwrap();
                            for variant in Variant::ALL {
                                let (_a, met) = run_query(g, &frags, Some(&sk), &q, &RunConfig::new(variant)).unwrap();
                                visited.push((variant, met.visited_nodes as f64));
                                bytes.push((variant, met.msg_bytes as f64));
                                runs += 1;
                            }
                            let mut cfg = RunConfig::new(Variant::Pine);
                            cfg.selector_override = Some(SelectorMode::ForcedAlternation);
                            let _ = run_query(g, &frags, Some(&sk), &q, &cfg).unwrap();
                            runs += 1;
                        }
                    }
                }
            }
        }
    }
    let med = |data: &Vec<(Variant, f64)>, v: Variant| median(data.iter().filter(|e| e.0 == v).map(|e| e.1).collect());
    println!("medians over {} runs ({:.1}s total):", runs, t_total.elapsed().as_secs_f64());
    for v in Variant::ALL {
        println!("  {:>8}: visited {:>8.0}  bytes {:>9.0}", v.name(), med(&visited, v), med(&bytes, v));
    }
    let (vb, vp) = (med(&visited, Variant::Baseline), med(&visited, Variant::Pine));
    let (bb, bp) = (med(&bytes, Variant::Baseline), med(&bytes, Variant::Pine));
    println!("reductions baseline->pine: visited {:.1}%  bytes {:.1}%", (1.0 - vp/vb)*100.0, (1.0 - bp/bb)*100.0);
    println!("orderings: visited b>=bf>=pads: {} {}  bytes b>=np>=pine: {} {}",
        med(&visited, Variant::Baseline) >= med(&visited, Variant::Bf),
        med(&visited, Variant::Bf) >= med(&visited, Variant::Pads),
        med(&bytes, Variant::Baseline) >= med(&bytes, Variant::Np),
        med(&bytes, Variant::Np) >= med(&bytes, Variant::Pine));
}
