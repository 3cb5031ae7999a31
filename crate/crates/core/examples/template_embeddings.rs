//! From pooled RoI features to scalar embeddings: the fixed shape masks,
//! the tiny head, and the pull/push losses that train it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use karyodet::losses::{pull_loss, push_loss, GroupedEmbeddings};
use karyodet::template::{template_mask, EmbeddingHead, RoiFeatures, TemplateKind, MASK_SIZE};

/// A fake pooled feature map: one spatial pattern scaled per channel.
fn features(pattern: impl Fn(usize, usize) -> f64) -> RoiFeatures {
    RoiFeatures::from_fn(|ch, row, col| pattern(row, col) * (1.0 + ch as f64 / 256.0)).unwrap()
}

fn main() {
    println!("circular template mask:");
    let c = template_mask(TemplateKind::Circular);
    for row in 0..MASK_SIZE {
        let cells: Vec<String> = (0..MASK_SIZE).map(|col| format!("{:.2}", c[row][col])).collect();
        println!("  {}", cells.join(" "));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let head = EmbeddingHead::random(&mut rng);

    // Two proposals over the same diagonal-shaped object, one over an
    // anti-diagonal one.
    let diag = |row: usize, col: usize| {
        let d = row as f64 - col as f64;
        (-d * d / 4.0).exp()
    };
    let anti = |row: usize, col: usize| {
        let d = row as f64 + col as f64 - 6.0;
        (-d * d / 4.0).exp()
    };
    let e1 = head.embed(&features(diag));
    let e2 = head.embed(&features(|r, c| diag(r, c) * 0.93 + 0.02));
    let e3 = head.embed(&features(anti));

    println!();
    println!("embeddings: same object {e1:.4} / {e2:.4}, different object {e3:.4}");
    println!(
        "gap within object {:.4}, across objects {:.4}",
        (e1 - e2).abs(),
        (e1 - e3).abs()
    );

    // Pull tightens each group around its mean; push separates the means
    // of overlapping neighbors out to the margin.
    let grouped = GroupedEmbeddings::new(vec![vec![e1, e2], vec![e3]]).unwrap();
    let pull = pull_loss(&grouped, 0.5, 2.0).unwrap();
    let means = grouped.means();
    let push = push_loss(&means, &[Some(1), Some(0)], 1.0).unwrap();
    println!();
    println!("pull loss {pull:.6}");
    println!(
        "push loss {:.6} over {} neighbor pairs (means {:.4} / {:.4})",
        push.value, push.considered, means[0], means[1]
    );
}
