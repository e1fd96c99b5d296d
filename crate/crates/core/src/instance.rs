//! Problem instances, synthetic generation and the instance file format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// A point on the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point { x: v[0], y: v[1] }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Closed-ball coverage sets: for each customer, the sites within `radius`.
pub fn build_neighbor_sets(customers: &[Point], sites: &[Point], radius: f64) -> Vec<Vec<usize>> {
    customers
        .iter()
        .map(|c| {
            sites
                .iter()
                .enumerate()
                .filter(|(_, s)| c.dist(s) <= radius)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// An immutable problem instance with unit customer demand.
#[derive(Debug, Clone)]
pub struct Instance {
    customers: Vec<Point>,
    sites: Vec<Point>,
    radius: f64,
    p: usize,
    r: usize,
    neighbor_sets: Vec<Vec<usize>>,
    site_customers: Vec<Vec<usize>>,
    words: usize,
    // site j -> bitmask of customers it covers, `words` u64 per site
    site_masks: Vec<u64>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.customers == other.customers
            && self.sites == other.sites
            && self.radius == other.radius
            && self.p == other.p
            && self.r == other.r
            && self.neighbor_sets == other.neighbor_sets
    }
}

impl Instance {
    pub fn new(
        customers: Vec<Point>,
        sites: Vec<Point>,
        radius: f64,
        p: usize,
        r: usize,
    ) -> Result<Self> {
        if customers.iter().chain(sites.iter()).any(|pt| !pt.is_finite()) {
            return Err(Error::InvalidInstance("coordinates must be finite".into()));
        }
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::InvalidInstance("radius must be finite and nonnegative".into()));
        }
        if r > p {
            return Err(Error::InvalidInstance("r exceeds p".into()));
        }
        if p > sites.len() {
            return Err(Error::InvalidInstance("p exceeds number of sites".into()));
        }
        let neighbor_sets = build_neighbor_sets(&customers, &sites, radius);
        let words = customers.len().div_ceil(64).max(1);
        let mut site_masks = vec![0u64; words * sites.len()];
        let mut site_customers = vec![Vec::new(); sites.len()];
        for (i, ns) in neighbor_sets.iter().enumerate() {
            for &j in ns {
                site_masks[j * words + i / 64] |= 1u64 << (i % 64);
                site_customers[j].push(i);
            }
        }
        Ok(Instance {
            customers,
            sites,
            radius,
            p,
            r,
            neighbor_sets,
            site_customers,
            words,
            site_masks,
        })
    }

    pub fn customers(&self) -> &[Point] {
        &self.customers
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn num_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn neighbor_sets(&self) -> &[Vec<usize>] {
        &self.neighbor_sets
    }

    /// Customers within the radius of site `j`.
    pub fn site_customers(&self, j: usize) -> &[usize] {
        &self.site_customers[j]
    }

    /// Same geometry with different budgets.
    pub fn with_budgets(&self, p: usize, r: usize) -> Result<Self> {
        Instance::new(self.customers.clone(), self.sites.clone(), self.radius, p, r)
    }

    /// Number of u64 words in a customer bitmask.
    pub fn mask_words(&self) -> usize {
        self.words
    }

    /// Customers covered by site `j` as a bitmask.
    pub fn site_mask(&self, j: usize) -> &[u64] {
        &self.site_masks[j * self.words..(j + 1) * self.words]
    }

    /// Number of customers covered by at least one of `sites`.
    pub fn covered_count<I: IntoIterator<Item = usize>>(&self, sites: I, buf: &mut Vec<u64>) -> usize {
        buf.clear();
        buf.resize(self.words, 0);
        for j in sites {
            for (b, m) in buf.iter_mut().zip(self.site_mask(j)) {
                *b |= m;
            }
        }
        buf.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceDoc {
            version: Some(FORMAT_VERSION),
            customers: Some(self.customers.clone()),
            sites: Some(self.sites.clone()),
            radius: Some(self.radius),
            p: Some(self.p),
            r: Some(self.r),
        };
        serde_json::to_string_pretty(&doc).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        let version = doc.version.ok_or(Error::MissingField("version"))?;
        if version != FORMAT_VERSION {
            return Err(Error::Malformed(format!("unsupported version {version}")));
        }
        let customers = doc.customers.ok_or(Error::MissingField("customers"))?;
        let sites = doc.sites.ok_or(Error::MissingField("sites"))?;
        let radius = doc.radius.ok_or(Error::MissingField("radius"))?;
        let p = doc.p.ok_or(Error::MissingField("p"))?;
        let r = doc.r.ok_or(Error::MissingField("r"))?;
        Instance::new(customers, sites, radius, p, r)
    }
}

/// Serialize an instance to its canonical document bytes.
pub fn serialize_instance(inst: &Instance) -> Vec<u8> {
    inst.to_json().into_bytes()
}

pub fn parse_instance(bytes: &[u8]) -> Result<Instance> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))?;
    Instance::from_json(text)
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    version: Option<u32>,
    customers: Option<Vec<Point>>,
    sites: Option<Vec<Point>>,
    radius: Option<f64>,
    p: Option<usize>,
    r: Option<usize>,
}

/// Parameters of a batch of synthetic uniform instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub p: usize,
    pub r: usize,
    pub radius: f64,
    pub seed: u64,
    pub count: usize,
}

impl GenSpec {
    /// Small synthetic setting: 20 nodes, p=4, r=1, radius 0.3.
    pub fn mclip20(seed: u64, count: usize) -> Self {
        GenSpec { n: 20, p: 4, r: 1, radius: 0.3, seed, count }
    }

    pub fn mclip50(seed: u64, count: usize) -> Self {
        GenSpec { n: 50, p: 8, r: 3, radius: 0.2, seed, count }
    }

    pub fn mclip100(seed: u64, count: usize) -> Self {
        GenSpec { n: 100, p: 15, r: 5, radius: 0.2, seed, count }
    }

    /// Look up a named scale preset (`mclip20`, `mclip50`, `mclip100`).
    pub fn preset(name: &str, seed: u64, count: usize) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mclip20" | "20" | "small" => Some(Self::mclip20(seed, count)),
            "mclip50" | "50" | "medium" => Some(Self::mclip50(seed, count)),
            "mclip100" | "100" | "large" => Some(Self::mclip100(seed, count)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidSpec("p must be positive".into()));
        }
        if self.n < self.p {
            return Err(Error::InvalidSpec(format!("n={} is smaller than p={}", self.n, self.p)));
        }
        if self.p < self.r {
            return Err(Error::InvalidSpec(format!("r={} exceeds p={}", self.r, self.p)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidSpec("radius must be positive".into()));
        }
        Ok(())
    }

    /// Instance `index` of the batch.
    ///
    /// Points are i.i.d. uniform on the unit square drawn from ChaCha8 seeded
    /// with `seed`, using `index` as the stream id, so each instance is
    /// independent of generation order. Customers and sites coincide.
    pub fn generate(&self, index: usize) -> Result<Instance> {
        self.validate()?;
        if index >= self.count {
            return Err(Error::InvalidSpec(format!(
                "index {index} out of range for count {}",
                self.count
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let points: Vec<Point> = (0..self.n)
            .map(|_| {
                let x: f64 = rng.random();
                let y: f64 = rng.random();
                Point::new(x, y)
            })
            .collect();
        Instance::new(points.clone(), points, self.radius, self.p, self.r)
    }

    pub fn generate_all(&self) -> Result<Vec<Instance>> {
        (0..self.count).map(|i| self.generate(i)).collect()
    }
}

pub fn generate_uniform_instance(spec: &GenSpec, index: usize) -> Result<Instance> {
    spec.generate(index)
}
