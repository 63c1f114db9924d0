//! Flat synthetic screenshots: a background tinted per screen, one filled
//! box per element with a stripe code of its label. The element list is
//! embedded as ground truth for the mock perceiver.

use sha2::{Digest, Sha256};

use crate::perception::{embed_ground_truth, ScreenElement, GROUND_TRUTH_KEY};

fn tint(seed: &str) -> [u8; 3] {
    let d = Sha256::digest(seed.as_bytes());
    [d[0] / 2 + 96, d[1] / 2 + 96, d[2] / 2 + 96]
}

pub fn render_png(screen_key: &str, size: (u32, u32), elements: &[ScreenElement]) -> Vec<u8> {
    let (w, h) = size;
    let mut px = vec![0u8; (w * h * 3) as usize];
    let bg = tint(screen_key);
    for chunk in px.chunks_exact_mut(3) {
        chunk.copy_from_slice(&bg);
    }
    let mut fill = |l: u32, t: u32, r: u32, b: u32, c: [u8; 3]| {
        for y in t..b.min(h) {
            for x in l..r.min(w) {
                let i = ((y * w + x) * 3) as usize;
                px[i..i + 3].copy_from_slice(&c);
            }
        }
    };
    for e in elements {
        let b = e.bounds;
        fill(b.left, b.top, b.right, b.bottom, [40, 40, 40]);
        if b.right - b.left > 4 && b.bottom - b.top > 4 {
            fill(b.left + 2, b.top + 2, b.right - 2, b.bottom - 2, tint(&e.content));
        }
        // label stripes: one 2px bar per byte, shade = byte value
        let mut x = b.left + 4;
        for byte in e.content.bytes() {
            if x + 2 > b.right.saturating_sub(2) {
                break;
            }
            let top = b.top + (b.bottom - b.top) / 3;
            let bottom = b.bottom - (b.bottom - b.top) / 3;
            fill(x, top, x + 2, bottom.max(top + 1), [byte, byte, byte]);
            x += 3;
        }
    }

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_itxt_chunk(GROUND_TRUTH_KEY.to_string(), embed_ground_truth(elements))
            .expect("itxt chunk");
        let mut writer = enc.write_header().expect("png header");
        writer.write_image_data(&px).expect("png data");
    }
    out
}
