use std::time::Instant;

use jpmap_core::mnist::Split;
use jpmap_core::model_io::save_model;
use jpmap_core::report::sig17;
use jpmap_core::vae::{train, TrainConfig, VaeModel, DESK_SUBSET};
use jpmap_core::Result;

use crate::args::{Profile, TrainArgs};
use crate::common::{load_split, write_text};

/// Expand profile + overrides into the effective configuration.
pub fn effective_config(args: &TrainArgs) -> (TrainConfig, Option<usize>) {
    let base = match args.profile {
        Profile::Desk => TrainConfig::desk(args.seed),
        Profile::Paper => TrainConfig::paper(args.seed),
    };
    let cfg = TrainConfig {
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        epochs: args.epochs.unwrap_or(base.epochs),
        lr: args.lr.unwrap_or(base.lr),
        lr_halving_period: args.halve_every.unwrap_or(base.lr_halving_period),
        seed: args.seed,
    };
    let subset = args.subset.or(match args.profile {
        Profile::Desk => Some(DESK_SUBSET),
        Profile::Paper => None,
    });
    (cfg, subset)
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let dataset = load_split(&args.data_dir, Split::Train)?;
    let (cfg, subset) = effective_config(args);
    let images = match subset {
        Some(k) => &dataset.images[..k.min(dataset.images.len())],
        None => &dataset.images[..],
    };

    eprintln!(
        "training on {} images, {} epochs, batch {}, lr {}",
        images.len(),
        cfg.epochs,
        cfg.batch_size,
        cfg.lr
    );
    let t = Instant::now();
    let model = VaeModel::standard(cfg.seed);
    let (model, curve) = train(model, images, &cfg)?;
    eprintln!("trained in {:.1}s", t.elapsed().as_secs_f64());

    save_model(&model, &args.out)?;
    let mut csv = String::from("epoch,mean_loss\n");
    for (i, loss) in curve.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, sig17(*loss)));
    }
    write_text(&args.out.with_extension("curve.csv"), &csv)?;

    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        println!(
            "model written to {} (epoch-1 loss {:.3}, final loss {:.3}, gamma {:.5})",
            args.out.display(),
            first,
            last,
            model.gamma()
        );
    } else {
        println!("model written to {} (no epochs run)", args.out.display());
    }
    Ok(())
}
