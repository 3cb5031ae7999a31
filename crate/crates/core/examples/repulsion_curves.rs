//! How the truncated normalized repulsion term reshapes the plain one.
//!
//! Two equal boxes overlap; the prediction slides from its own ground
//! truth (shift 0) onto the neighbor (shift 1). The plain loss charges the
//! ground truths' own overlap as an inescapable floor, so its usable range
//! shrinks as scenes get denser. The truncated variant charges only the
//! overlap the prediction adds, rescaled to the full range.

use karyodet::geometry::BBox;
use karyodet::losses::{shift_curve, truncated_repulsion_term, SMOOTH_LN_SIGMA};

fn main() {
    println!("shift    rl (excess)   tnrl");
    for p in shift_curve(0.5, 11, SMOOTH_LN_SIGMA).unwrap() {
        println!("{:>5.1}    {:>10.4}   {:>6.4}", p.shift, p.rl, p.tnrl);
    }

    // The gap widens with the baseline overlap: the denser the scene, the
    // less headroom the plain loss has left.
    println!();
    println!("overlap   rl(0.5)   tnrl(0.5)");
    for overlap in [0.3, 0.5, 0.7] {
        let mid = shift_curve(overlap, 101, SMOOTH_LN_SIGMA).unwrap()[50];
        println!("{overlap:>7}   {:>7.4}   {:>9.4}", mid.rl, mid.tnrl);
    }

    // A neighbor already contained in the attracted ground truth cannot be
    // escaped at all, so it is not charged at all.
    let attract = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let inner = BBox::new(2.0, 2.0, 6.0, 6.0).unwrap();
    let pred = BBox::new(1.0, 0.0, 11.0, 10.0).unwrap();
    println!();
    println!(
        "contained neighbor, prediction anywhere: tnrl = {}",
        truncated_repulsion_term(&pred, &attract, &inner, SMOOTH_LN_SIGMA)
    );
}
