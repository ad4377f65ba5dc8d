//! Frozen values from an independent float re-implementation of the block
//! dynamics on a fixed price sequence (beta 0.8, conversion every 2 blocks).

use diamond_amm::conversion::{ConversionProcess, ExactPrice};
use diamond_amm::harness::{run_on_path, ScenarioConfig};
use diamond_amm::market_model::PricePath;
use diamond_amm::DiamondPool;

const PRICES: [f64; 7] = [1.21, 0.9, 1.1, 1.3, 0.95, 1.0, 1.44];

// (rx, ry, vx, vy) after each block
const STATES: [[f64; 4]; 7] = [
    [102.0, 84.29752066115702, 0.0, 13.884297520661164],
    [94.98880430434176, 105.54311589371306, 0.0, 0.0],
    [96.9938583209399, 88.17623483721809, 0.0, 15.351725948176451],
    [115.71649546061197, 89.01268881585534, 0.0, 0.0],
    [87.43370231641224, 92.0354761225392, 24.923552868439515, 0.0],
    [102.19046497365963, 102.19046497365963, 0.0, 0.0],
    [
        106.27808357260601,
        73.80422470319861,
        0.0,
        24.979891438005694,
    ],
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn block_by_block_states() {
    let mut pool = DiamondPool::product(100.0, 100.0, 0.8, 2).unwrap();
    let process = ConversionProcess::default();
    for (eps, want) in PRICES.iter().zip(STATES) {
        pool.end_of_block(*eps, &process, &mut ExactPrice).unwrap();
        let (r, v) = (pool.reserves(), pool.vault());
        for (got, want) in [r.rx, r.ry, v.vx, v.vy].into_iter().zip(want) {
            assert!(close(got, want), "eps {eps}: {got} vs {want}");
        }
    }
}

#[test]
fn horizon_values() {
    let cfg = ScenarioConfig {
        beta: 0.8,
        tau_blocks: 2,
        rx0: 100.0,
        ry0: 100.0,
        eps0: 1.0,
        ..ScenarioConfig::default()
    };
    let mut eps = vec![1.0];
    eps.extend(PRICES);
    let path = PricePath {
        eps,
        master_seed: 0,
        path_id: 0,
    };
    let (r, _) = run_on_path(&cfg, &path).unwrap();
    assert!(close(r.v_diamond, 248.52721081594018));
    assert!(close(r.v_cfmm, 240.0));
    assert!(close(r.v_hodl, 244.0));
    assert!(close(r.cumulative_cfmm_lvr, 11.402145755562618));
    assert!(close(r.cumulative_rebate, 9.047112770021752));
}
