//! Hard-edged rasterization of scenes onto the grid canvas.

use crate::image::Image;
use crate::world::{Scene, Shape, GRID};

pub const BACKGROUND: f64 = 0.1;

/// Renders each object as its shape in its color inside its grid cell.
/// No anti-aliasing: pixels are either the object color or the background.
pub fn render_scene(scene: &Scene) -> Image {
    let canvas = scene.canvas_size;
    let block = canvas / GRID;
    let offset = (canvas - block * GRID) / 2;
    let mut image = Image::filled(canvas, canvas, BACKGROUND);

    for object in &scene.objects {
        let rgb = object.color.rgb();
        let top = offset + object.row * block;
        let left = offset + object.col * block;
        // 1px margin inside the block
        let m = block - 2;
        for i in 1..=m {
            for j in 1..=m {
                if covers(object.shape, i, j, m) {
                    for (channel, &value) in rgb.iter().enumerate() {
                        image.set(channel, top + i, left + j, value);
                    }
                }
            }
        }
    }
    image
}

/// Pixel coverage test in block coordinates (1..=m on both axes).
fn covers(shape: Shape, i: usize, j: usize, m: usize) -> bool {
    match shape {
        Shape::Square => true,
        Shape::Circle => {
            let c = (1 + m) as f64 / 2.0;
            let r = m as f64 / 2.0 - 0.2;
            let di = i as f64 - c;
            let dj = j as f64 - c;
            di * di + dj * dj <= r * r
        }
        Shape::Triangle => {
            // apex at the top, base at the bottom
            let mid = (1 + m).div_ceil(2);
            let half_width = (i - 1) / 2;
            j + half_width + 1 >= mid && j <= mid + half_width
        }
    }
}

/// The pixel block of a grid cell, as (rows, cols) ranges.
pub fn cell_block(
    canvas: usize,
    row: usize,
    col: usize,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let block = canvas / GRID;
    let offset = (canvas - block * GRID) / 2;
    let top = offset + row * block;
    let left = offset + col * block;
    (top..top + block, left..left + block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{sample_scene, Color, Relation, SceneObject, DEFAULT_CANVAS};

    fn scene_with(objects: Vec<SceneObject>, relation: Option<Relation>) -> Scene {
        Scene { objects, relation, canvas_size: DEFAULT_CANVAS }
    }

    fn channel_means_in_block(image: &Image, row: usize, col: usize) -> [f64; 3] {
        let (rows, cols) = cell_block(image.height(), row, col);
        let mut sums = [0.0; 3];
        let mut count = 0;
        for r in rows {
            for c in cols.clone() {
                for (channel, sum) in sums.iter_mut().enumerate() {
                    *sum += image.get(channel, r, c);
                }
                count += 1;
            }
        }
        sums.map(|s| s / count as f64)
    }

    #[test]
    fn red_circle_dominates_its_cell_block() {
        let scene = scene_with(
            vec![SceneObject { shape: Shape::Circle, color: Color::Red, row: 1, col: 1 }],
            None,
        );
        let image = render_scene(&scene);
        let [r, g, b] = channel_means_in_block(&image, 1, 1);
        assert!(r - g >= 0.3, "red {r} vs green {g}");
        assert!(r - b >= 0.3, "red {r} vs blue {b}");
    }

    #[test]
    fn background_is_uniform_outside_object_cells() {
        let scene = scene_with(
            vec![SceneObject { shape: Shape::Square, color: Color::Cyan, row: 0, col: 0 }],
            None,
        );
        let image = render_scene(&scene);
        let (rows, cols) = cell_block(DEFAULT_CANVAS, 0, 0);
        for r in 0..DEFAULT_CANVAS {
            for c in 0..DEFAULT_CANVAS {
                if rows.contains(&r) && cols.contains(&c) {
                    continue;
                }
                for channel in 0..3 {
                    assert_eq!(image.get(channel, r, c), BACKGROUND, "pixel ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_and_bounded() {
        for seed in 0..50 {
            let scene = sample_scene(seed);
            let a = render_scene(&scene);
            let b = render_scene(&scene);
            assert_eq!(a, b);
            assert!(a.is_finite_unit_range());
        }
    }

    #[test]
    fn shapes_have_distinct_footprints() {
        let mk = |shape| {
            scene_with(vec![SceneObject { shape, color: Color::Green, row: 1, col: 1 }], None)
        };
        let count = |img: &Image| {
            img.data().iter().filter(|&&v| v != BACKGROUND).count()
        };
        let circle = count(&render_scene(&mk(Shape::Circle)));
        let square = count(&render_scene(&mk(Shape::Square)));
        let triangle = count(&render_scene(&mk(Shape::Triangle)));
        assert!(square > circle, "square {square} vs circle {circle}");
        assert!(circle > triangle, "circle {circle} vs triangle {triangle}");
    }
}
