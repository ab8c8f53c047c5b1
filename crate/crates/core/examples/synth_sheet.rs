//! Writes a contact sheet of rendered signs to the path given as the first argument.
use rand::SeedableRng;
use taa::data::synth::{render_sign, SignStyle, SYNTH_CLASSES};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth_sheet.png".into());
    let (side, per, zoom) = (32usize, 8usize, 3u32);
    let rows = SYNTH_CLASSES.len() * 2;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut sheet = image::RgbImage::new((side * per) as u32 * zoom, (side * rows) as u32 * zoom);
    for (r, (class, style)) in SYNTH_CLASSES
        .iter()
        .flat_map(|c| [(c, SignStyle::Us), (c, SignStyle::European)])
        .enumerate()
    {
        for i in 0..per {
            let s = render_sign(class, style, side, &mut rng).unwrap();
            for ((y, x, c), v) in s.pixels.indexed_iter() {
                for dy in 0..zoom {
                    for dx in 0..zoom {
                        let px = sheet.get_pixel_mut(((i * side + x) as u32) * zoom + dx, ((r * side + y) as u32) * zoom + dy);
                        px[c] = (v * 255.0).round() as u8;
                    }
                }
            }
        }
    }
    sheet.save(out).unwrap();
}
