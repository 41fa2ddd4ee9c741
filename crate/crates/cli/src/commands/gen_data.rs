use jpmap_core::mnist::{write_dataset, Split};
use jpmap_core::rng;
use jpmap_core::synth::glyph_digits;
use jpmap_core::Result;

use crate::args::GenDataArgs;

pub fn run(args: &GenDataArgs) -> Result<()> {
    let train = glyph_digits(args.train, rng::derive(args.seed, &[1]), Split::Train);
    let test = glyph_digits(args.test, rng::derive(args.seed, &[2]), Split::Test);
    write_dataset(&args.out_dir, &train)?;
    write_dataset(&args.out_dir, &test)?;
    println!(
        "wrote {} train and {} test images to {}",
        train.len(),
        test.len(),
        args.out_dir.display()
    );
    Ok(())
}
