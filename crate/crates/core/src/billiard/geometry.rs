use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Vec2::new(c, s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Specular reflection `v - 2<v,n> n` of an incoming velocity off a surface
/// with unit normal `n`. Expects `<v, n> < 0`.
pub fn reflect(incoming: Vec2, normal: Vec2) -> Vec2 {
    debug_assert!(incoming.dot(normal) <= 0.0, "reflect called with an outgoing vector");
    incoming - normal * (2.0 * incoming.dot(normal))
}

/// Entry distance of the ray `origin + t·dir` (unit `dir`) into the disc of
/// `radius` around `center`, if the ray enters it at some `t > 0`.
#[inline]
pub fn ray_circle_entry(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let w = origin - center;
    let b = w.dot(dir);
    if b >= 0.0 {
        return None;
    }
    let c = w.dot(w) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 || c <= 0.0 {
        return None;
    }
    // t1·t2 = c; the far root -b + sqrt(disc) has no cancellation.
    Some(c / (-b + disc.sqrt()))
}
