// Scratch probe: cache the default sweep, then preview the end-to-end
// pipeline numbers (criterion-5 shape) and grid monotonicity.
use cwripple::circuit::SimConfig;
use cwripple::dataset::{read_csv, run_sweep, write_csv, SweepGrid};
use cwripple::hybrid::{train_pipeline, PipelineConfig};
use std::path::Path;
use std::time::Instant;

fn main() {
    let cache = Path::new("/tmp/cwripple_probe_data.csv");
    let records = if cache.exists() {
        read_csv(cache).unwrap()
    } else {
        let t0 = Instant::now();
        let r = run_sweep(&SweepGrid::default(), &SimConfig::default(), 0).unwrap();
        println!("sweep took {:.1}s", t0.elapsed().as_secs_f64());
        write_csv(&r, cache).unwrap();
        r
    };
    println!("records: {}", records.len());

    // Monotonicity of vpp_sim along each axis, walking case ids directly.
    // id = (((si*3 + vi)*3 + ci)*3 + fi)*3 + ri for the default grid.
    let dims = [4usize, 3, 3, 3, 3];
    let strides = {
        let mut s = [0usize; 5];
        s[4] = 1;
        for k in (0..4).rev() {
            s[k] = s[k + 1] * dims[k + 1];
        }
        s
    };
    let vpp = |id: usize| records[id].vpp_sim_v;
    let mut violations = 0;
    for id in 0..records.len() {
        let mut digits = [0usize; 5];
        let mut rest = id;
        for k in 0..5 {
            digits[k] = rest / strides[k];
            rest %= strides[k];
        }
        // Non-decreasing in N (axis 0); non-increasing in C (2), f (3);
        // non-decreasing in 1/R means non-increasing in R (4).
        if digits[0] + 1 < dims[0] && vpp(id + strides[0]) < vpp(id) {
            violations += 1;
            println!("N-axis violation at case {id}");
        }
        if digits[2] + 1 < dims[2] && vpp(id + strides[2]) > vpp(id) {
            violations += 1;
            println!("C-axis violation at case {id}: {} -> {}", vpp(id), vpp(id + strides[2]));
        }
        if digits[3] + 1 < dims[3] && vpp(id + strides[3]) > vpp(id) {
            violations += 1;
            println!("f-axis violation at case {id}: {} -> {}", vpp(id), vpp(id + strides[3]));
        }
        if digits[4] + 1 < dims[4] && vpp(id + strides[4]) > vpp(id) {
            violations += 1;
            println!("R-axis violation at case {id}: {} -> {}", vpp(id), vpp(id + strides[4]));
        }
    }
    println!("vpp_sim monotonicity violations: {violations}");

    // Bit-exact residual identity preview (criterion 7).
    let mut ulp_misses = 0;
    for r in &records {
        let corrected = r.vpp_theory_v + (r.vpp_sim_v - r.vpp_theory_v);
        if corrected != r.vpp_sim_v {
            ulp_misses += 1;
            println!(
                "  identity miss case {}: theory {} sim {} corrected {}",
                r.case_id, r.vpp_theory_v, r.vpp_sim_v, corrected
            );
        }
    }
    println!("residual identity misses: {ulp_misses}");

    // Pipeline preview.
    let t0 = Instant::now();
    let outcome = train_pipeline(&records, &PipelineConfig::default()).unwrap();
    println!("pipeline took {:.1}s", t0.elapsed().as_secs_f64());
    println!("best hp: {:?}", outcome.best_hp);
    let g = &outcome.test_report.rows[0];
    println!(
        "test split: theory rmse {:.2} mae {:.2} bias {:+.2} | corrected rmse {:.2} mae {:.2} bias {:+.2} | reduction {:.1}%",
        g.theory.rmse, g.theory.mae, g.theory.bias, g.corrected.rmse, g.corrected.mae, g.corrected.bias,
        g.rmse_reduction_pct
    );
    println!("{}", outcome.full_report.to_text());
    println!("top importances:");
    for (name, v) in outcome.model.ranked_importances().into_iter().take(8) {
        println!("  {name:>14} {v:.4}");
    }
}
