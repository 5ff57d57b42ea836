//! Workspace regions.
//!
//! A region is a union of axis-aligned rectangles. Its margin is the maximum
//! over rectangles of the smallest signed distance to a face, so it is
//! positive strictly inside, zero on the boundary and negative outside.

use catl_neural::{rect_union_margin, Rect2};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Rect { min, max }
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    fn as_rect2(&self) -> Rect2 {
        Rect2 {
            min: self.min,
            max: self.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct Region {
    pub name: String,
    rects: Vec<Rect2>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RegionRepr {
    Single {
        name: String,
        min: [f64; 2],
        max: [f64; 2],
    },
    Union {
        name: String,
        rects: Vec<Rect>,
    },
}

impl TryFrom<RegionRepr> for Region {
    type Error = String;

    fn try_from(r: RegionRepr) -> Result<Self, String> {
        let (name, rects) = match r {
            RegionRepr::Single { name, min, max } => (name, vec![Rect { min, max }]),
            RegionRepr::Union { name, rects } => (name, rects),
        };
        Region::union(name, rects)
    }
}

impl From<Region> for RegionRepr {
    fn from(r: Region) -> Self {
        if r.rects.len() == 1 {
            RegionRepr::Single {
                name: r.name,
                min: r.rects[0].min,
                max: r.rects[0].max,
            }
        } else {
            let rects = r.rects().collect();
            RegionRepr::Union { name: r.name, rects }
        }
    }
}

impl Region {
    pub fn rect(name: impl Into<String>, min: [f64; 2], max: [f64; 2]) -> Result<Self, String> {
        Region::union(name, vec![Rect { min, max }])
    }

    pub fn union(name: impl Into<String>, rects: Vec<Rect>) -> Result<Self, String> {
        let name = name.into();
        if rects.is_empty() {
            return Err(format!("region {name} has no rectangles"));
        }
        for r in &rects {
            if !(0..2).all(|k| r.min[k].is_finite() && r.max[k].is_finite() && r.min[k] <= r.max[k]) {
                return Err(format!("region {name}: bad rectangle {:?}..{:?}", r.min, r.max));
            }
        }
        Ok(Region {
            name,
            rects: rects.iter().map(Rect::as_rect2).collect(),
        })
    }

    pub fn rects(&self) -> impl Iterator<Item = Rect> + '_ {
        self.rects.iter().map(|r| Rect {
            min: r.min,
            max: r.max,
        })
    }

    pub(crate) fn raw_rects(&self) -> &[Rect2] {
        &self.rects
    }

    /// Signed margin; `>= 0` exactly when `p` lies in the region.
    pub fn margin(&self, p: [f64; 2]) -> f64 {
        rect_union_margin(&self.rects, p[0], p[1])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.margin(p) >= 0.0
    }

    /// Uniform sample over the union (rectangles picked by area; a
    /// zero-area region samples its first rectangle).
    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 2] {
        let areas: Vec<f64> = self.rects().map(|r| r.area()).collect();
        let total: f64 = areas.iter().sum();
        let mut idx = 0;
        if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            for (i, a) in areas.iter().enumerate() {
                idx = i;
                if u < *a {
                    break;
                }
                u -= a;
            }
        }
        let r = &self.rects[idx];
        let mut p = [0.0; 2];
        for k in 0..2 {
            let u: f64 = rng.gen();
            p[k] = r.min[k] + u * (r.max[k] - r.min[k]);
        }
        p
    }

    pub fn bounding_box(&self) -> Rect {
        let mut b = Rect {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for r in &self.rects {
            for k in 0..2 {
                b.min[k] = b.min[k].min(r.min[k]);
                b.max[k] = b.max[k].max(r.max[k]);
            }
        }
        b
    }
}

pub fn find_region<'a>(regions: &'a [Region], name: &str) -> Option<&'a Region> {
    regions.iter().find(|r| r.name == name)
}
