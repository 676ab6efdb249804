use ndarray::Array2;
use polydiff::bench::{run_query, PlannerContext, Variant};
use polydiff::bernstein::BernsteinTransform;
use polydiff::config::Config;
use polydiff::diffusion::{decode_rows, read_checkpoint, standard_normal, Endpoints};
use polydiff::rng::{derive_rng, derive_seed};
use polydiff::world::{generate_problem, is_collision_free, Difficulty};

fn main() {
    let cfg = Config::default();
    let params = read_checkpoint(std::path::Path::new("/root/accept-cache/acceptance.pdmw")).unwrap();
    let transform = BernsteinTransform::new(cfg.trajectory.degree, cfg.trajectory.horizon).unwrap();
    let ctx = PlannerContext::new(&params, &transform, &cfg).unwrap();
    let n = 80;
    let mut gs_hist = [0usize; 6];
    let mut gs_fail = 0;
    let mut pds_hist = [0usize; 6];
    let mut pds_fail = 0;
    let mut free_curves = 0usize;
    let mut total_curves = 0usize;
    for i in 0..n {
        let pseed = derive_seed(0xacce, &[4, 2, i]);
        let problem = generate_problem(pseed, Difficulty::Cluttered, &cfg.scene).unwrap();
        let gs = run_query(&ctx, &problem, Variant::Gs, derive_seed(pseed, &[1]));
        if gs.success {
            gs_hist[gs.stitches.min(5)] += 1;
        } else {
            gs_fail += 1;
        }
        let pds = run_query(&ctx, &problem, Variant::Pds, derive_seed(pseed, &[1]));
        if pds.success {
            pds_hist[pds.stitches.min(5)] += 1;
        } else {
            pds_fail += 1;
        }
        // How often is a raw decoded-noise curve collision-free here?
        let endpoints = Endpoints { start: problem.start, goal: problem.goal };
        let d = params.norm_shift.len();
        let mut rng = derive_rng(pseed, &[0x9999]);
        let raw = standard_normal(&mut rng, 32, d);
        let decoded = decode_rows(&params, &raw, &endpoints);
        for row in decoded.rows() {
            let alpha: Array2<f64> =
                row.to_owned().into_shape_with_order((2, cfg.trajectory.degree + 1)).unwrap();
            let traj = transform.evaluate(&alpha).unwrap();
            total_curves += 1;
            if is_collision_free(&problem.scene, &traj, cfg.stitch.resolution) {
                free_curves += 1;
            }
        }
    }
    println!("GS success by stitches [0,1,2,3,4,5+]: {gs_hist:?}, fail {gs_fail} of {n}");
    println!("PDS success by stitches [0,1,2,3,4,5+]: {pds_hist:?}, fail {pds_fail} of {n}");
    println!(
        "raw noise curves free: {free_curves}/{total_curves} = {:.1}%, per-problem best-of-32 luck {:.1}%",
        100.0 * free_curves as f64 / total_curves as f64,
        100.0 * (1.0 - (1.0 - free_curves as f64 / total_curves as f64).powi(32))
    );
}
