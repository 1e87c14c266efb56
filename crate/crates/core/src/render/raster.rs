//! Signed-distance rasterizer. Shapes are described in entity-local pixel
//! coordinates and painted as ordered layers; each sample takes the colour of
//! the last layer covering it.

use crate::image_buf::ImageBuf;

pub(crate) type Vec2 = (f64, f64);

#[derive(Debug, Clone, Copy)]
pub(crate) enum Shape {
    Disk { c: Vec2, r: f64 },
    /// Axis-aligned square of half side `half`, centred on the origin.
    Square { half: f64 },
    /// Equilateral triangle with circumradius `r`, apex pointing up.
    Triangle { r: f64 },
    Capsule { a: Vec2, b: Vec2, r: f64 },
}

impl Shape {
    fn sdf(&self, p: Vec2) -> f64 {
        match *self {
            Shape::Disk { c, r } => len((p.0 - c.0, p.1 - c.1)) - r,
            Shape::Square { half } => {
                let q = (p.0.abs() - half, p.1.abs() - half);
                len((q.0.max(0.0), q.1.max(0.0))) + q.0.max(q.1).min(0.0)
            }
            Shape::Triangle { r } => {
                let k = 3f64.sqrt();
                let half_side = r * k / 2.0;
                // Screen y points down; flip so the apex is up.
                let mut q = (p.0.abs() - half_side, -p.1 + half_side / k);
                if q.0 + k * q.1 > 0.0 {
                    q = ((q.0 - k * q.1) / 2.0, (-k * q.0 - q.1) / 2.0);
                }
                q.0 -= q.0.clamp(-2.0 * half_side, 0.0);
                -len(q) * q.1.signum()
            }
            Shape::Capsule { a, b, r } => {
                let pa = (p.0 - a.0, p.1 - a.1);
                let ba = (b.0 - a.0, b.1 - a.1);
                let t = ((pa.0 * ba.0 + pa.1 * ba.1) / (ba.0 * ba.0 + ba.1 * ba.1)).clamp(0.0, 1.0);
                len((pa.0 - ba.0 * t, pa.1 - ba.1 * t)) - r
            }
        }
    }
}

fn len(v: Vec2) -> f64 {
    (v.0 * v.0 + v.1 * v.1).sqrt()
}

/// A shape shrunk by `inset` pixels, painted in `color`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layer {
    pub shape: Shape,
    pub inset: f64,
    pub color: [u8; 3],
}

impl Layer {
    pub fn new(shape: Shape, color: [u8; 3]) -> Self {
        Self { shape, inset: 0.0, color }
    }

    pub fn inset(shape: Shape, inset: f64, color: [u8; 3]) -> Self {
        Self { shape, inset, color }
    }

    fn sdf(&self, p: Vec2) -> f64 {
        self.shape.sdf(p) + self.inset
    }
}

/// Layers placed at `center`, rotated clockwise on screen by `(sin, cos)`.
#[derive(Debug, Clone)]
pub(crate) struct Item {
    pub center: Vec2,
    pub sin: f64,
    pub cos: f64,
    /// Every layer lies within this distance of `center`.
    pub radius: f64,
    pub layers: Vec<Layer>,
}

impl Item {
    fn local(&self, p: Vec2) -> Vec2 {
        let d = (p.0 - self.center.0, p.1 - self.center.1);
        (d.0 * self.cos + d.1 * self.sin, -d.0 * self.sin + d.1 * self.cos)
    }

    fn sample(&self, p: Vec2) -> Option<[u8; 3]> {
        let q = self.local(p);
        self.layers.iter().rev().find(|l| l.sdf(q) <= 0.0).map(|l| l.color)
    }

    fn edge_distance(&self, p: Vec2) -> f64 {
        let q = self.local(p);
        self.layers.iter().map(|l| l.sdf(q).abs()).fold(f64::INFINITY, f64::min)
    }
}

/// `(sin, cos)` of an angle in degrees, exact on multiples of 90°.
pub(crate) fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

/// Paints items onto a white square canvas. `samples` is the per-axis
/// supersampling factor; pixels whose centre lies farther than a half
/// diagonal from every layer edge are sampled once.
pub(crate) fn rasterize(size: u32, items: &[Item], samples: u32) -> ImageBuf {
    let mut img = ImageBuf::white(size);
    let n = samples.max(1);
    let max = f64::from(size);
    for item in items {
        let x0 = (item.center.0 - item.radius - 1.0).floor().clamp(0.0, max) as u32;
        let x1 = (item.center.0 + item.radius + 1.0).ceil().clamp(0.0, max) as u32;
        let y0 = (item.center.1 - item.radius - 1.0).floor().clamp(0.0, max) as u32;
        let y1 = (item.center.1 + item.radius + 1.0).ceil().clamp(0.0, max) as u32;
        for y in y0..y1 {
            for x in x0..x1 {
                let centre = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                let under = img.get(x, y);
                if n == 1 || item.edge_distance(centre) > std::f64::consts::FRAC_1_SQRT_2 {
                    if let Some(c) = item.sample(centre) {
                        img.put(x, y, c);
                    }
                    continue;
                }
                let mut acc = [0u32; 3];
                for sy in 0..n {
                    for sx in 0..n {
                        let p = (
                            f64::from(x) + (f64::from(sx) + 0.5) / f64::from(n),
                            f64::from(y) + (f64::from(sy) + 0.5) / f64::from(n),
                        );
                        let c = item.sample(p).unwrap_or(under);
                        for k in 0..3 {
                            acc[k] += u32::from(c[k]);
                        }
                    }
                }
                let total = n * n;
                img.put(x, y, acc.map(|v| ((v + total / 2) / total) as u8));
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(layers: Vec<Layer>, deg: f64) -> Item {
        let (sin, cos) = sin_cos_deg(deg);
        Item { center: (16.0, 16.0), sin, cos, radius: 15.0, layers }
    }

    #[test]
    fn sdf_signs() {
        let tri = Shape::Triangle { r: 10.0 };
        assert!(tri.sdf((0.0, 0.0)) < 0.0);
        assert!(tri.sdf((0.0, -9.5)) < 0.0);
        assert!(tri.sdf((0.0, 9.5)) > 0.0);
        assert!((tri.sdf((0.0, -10.0))).abs() < 1e-9);
        let sq = Shape::Square { half: 5.0 };
        assert!((sq.sdf((8.0, 0.0)) - 3.0).abs() < 1e-12);
        assert!((sq.sdf((0.0, 0.0)) + 5.0).abs() < 1e-12);
        let cap = Shape::Capsule { a: (0.0, 0.0), b: (10.0, 0.0), r: 1.0 };
        assert!((cap.sdf((5.0, 3.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_turns_are_exact() {
        for (deg, expected) in [(0.0, (0.0, 1.0)), (-90.0, (-1.0, 0.0)), (450.0, (1.0, 0.0)), (-180.0, (0.0, -1.0))] {
            assert_eq!(sin_cos_deg(deg), expected);
        }
    }

    #[test]
    fn clockwise_rotation_moves_up_to_right() {
        let marker = Layer::new(Shape::Disk { c: (0.0, -10.0), r: 3.0 }, [0; 3]);
        let img = rasterize(32, &[item(vec![marker], 90.0)], 1);
        assert_eq!(img.get(26, 16), [0; 3]);
        assert_eq!(img.get(16, 6), [255; 3]);
    }

    #[test]
    fn antialiasing_only_touches_edges() {
        let disk = Layer::new(Shape::Disk { c: (0.0, 0.0), r: 8.3 }, [0; 3]);
        let hard = rasterize(32, &[item(vec![disk], 0.0)], 1);
        let soft = rasterize(32, &[item(vec![disk], 0.0)], 4);
        assert_eq!(soft.get(16, 16), [0; 3]);
        assert_eq!(soft.get(1, 1), [255; 3]);
        let grey = soft.as_raw().chunks(3).filter(|p| p[0] != 0 && p[0] != 255).count();
        assert!(grey > 0);
        assert!(hard.as_raw().iter().all(|&v| v == 0 || v == 255));
        assert!(soft.is_grayscale());
    }
}
