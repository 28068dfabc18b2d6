//! Uniform-grid indicator domains, the parametric shape families used as a
//! test corpus, and measurements against analytic balls.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::unit_ball_measure;

/// Subsamples per cell edge when measuring against analytic balls.
pub const SUPERSAMPLE: usize = 4;
const SAMPLES_PER_CELL: u64 = (SUPERSAMPLE * SUPERSAMPLE) as u64;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// A planar domain as a boolean table of square cells of side `h`.
///
/// Cell `(i, j)` covers `[ox + i h, ox + (i+1) h] × [oy + j h, oy + (j+1) h]`
/// and is stored at `j * nx + i`. The outermost ring of cells is always empty.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    origin: Point,
    h: f64,
    nx: usize,
    ny: usize,
    cells: Vec<bool>,
}

impl GridDomain {
    pub fn new(origin: Point, h: f64, nx: usize, ny: usize, cells: Vec<bool>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidDomain(format!("cell size {h} must be positive")));
        }
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidDomain(format!(
                "grid {nx}x{ny} too small for a padding rim"
            )));
        }
        if cells.len() != nx * ny {
            return Err(Error::InvalidDomain(format!(
                "{} cells given for a {nx}x{ny} grid",
                cells.len()
            )));
        }
        if !cells.iter().any(|&c| c) {
            return Err(Error::InvalidDomain("no active cell".into()));
        }
        let rim_touched = (0..nx).any(|i| cells[i] || cells[(ny - 1) * nx + i])
            || (0..ny).any(|j| cells[j * nx] || cells[j * nx + nx - 1]);
        if rim_touched {
            return Err(Error::InvalidDomain("active cell on the padding rim".into()));
        }
        Ok(GridDomain {
            origin,
            h,
            nx,
            ny,
            cells,
        })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn is_inside(&self, i: usize, j: usize) -> bool {
        i < self.nx && j < self.ny && self.cells[j * self.nx + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.h,
            self.origin.y + (j as f64 + 0.5) * self.h,
        )
    }

    /// Grid indices of the active cells in row-major order. Every per-cell
    /// vector in this crate (eigenvectors, labels) follows this order.
    pub fn active_cells(&self) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(k, &c)| c.then_some(k))
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Lebesgue measure: active cell count times `h²`.
    pub fn measure(&self) -> f64 {
        self.active_count() as f64 * self.h * self.h
    }

    /// Index bounding box of the active cells, `(i0, j0, i1, j1)` with
    /// exclusive upper ends.
    pub fn bounding_box(&self) -> (usize, usize, usize, usize) {
        let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.cells[j * self.nx + i] {
                    i0 = i0.min(i);
                    j0 = j0.min(j);
                    i1 = i1.max(i + 1);
                    j1 = j1.max(j + 1);
                }
            }
        }
        (i0, j0, i1, j1)
    }

    /// Mean of the active cell centers.
    pub fn centroid(&self) -> Point {
        let (mut si, mut sj, mut n) = (0u64, 0u64, 0u64);
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.cells[j * self.nx + i] {
                    si += i as u64;
                    sj += j as u64;
                    n += 1;
                }
            }
        }
        let n = n as f64;
        Point::new(
            self.origin.x + (si as f64 / n + 0.5) * self.h,
            self.origin.y + (sj as f64 / n + 0.5) * self.h,
        )
    }

    /// Length of the staircase boundary (active/inactive cell edges times `h`).
    pub fn edge_perimeter(&self) -> f64 {
        let mut edges = 0usize;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.cells[j * self.nx + i] {
                    edges += [(0, 1), (2, 1), (1, 0), (1, 2)]
                        .iter()
                        .filter(|&&(di, dj)| !self.is_inside(i + di - 1, j + dj - 1))
                        .count();
                }
            }
        }
        edges as f64 * self.h
    }

    /// Component label per grid cell (`u32::MAX` outside) under 4-neighbour
    /// connectivity, and the number of components.
    pub fn component_labels(&self) -> (Vec<u32>, usize) {
        let mut labels = vec![u32::MAX; self.cells.len()];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..self.cells.len() {
            if !self.cells[start] || labels[start] != u32::MAX {
                continue;
            }
            labels[start] = count;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = (k % self.nx, k / self.nx);
                // the rim is empty, so neighbours of active cells are in range
                for nb in [k - 1, k + 1, k - self.nx, k + self.nx] {
                    debug_assert!(i > 0 && j > 0);
                    if self.cells[nb] && labels[nb] == u32::MAX {
                        labels[nb] = count;
                        stack.push(nb);
                    }
                }
            }
            count += 1;
        }
        (labels, count as usize)
    }

    /// The same cells with the origin moved by a whole number of cells.
    pub fn translated(&self, di: i64, dj: i64) -> GridDomain {
        let mut d = self.clone();
        d.origin = Point::new(
            self.origin.x + di as f64 * self.h,
            self.origin.y + dj as f64 * self.h,
        );
        d
    }

    /// Extra empty cells on each side; the world position of every cell is kept.
    pub fn padded(&self, left: usize, bottom: usize, right: usize, top: usize) -> GridDomain {
        let nx = self.nx + left + right;
        let ny = self.ny + bottom + top;
        let mut cells = vec![false; nx * ny];
        for j in 0..self.ny {
            for i in 0..self.nx {
                cells[(j + bottom) * nx + i + left] = self.cells[j * self.nx + i];
            }
        }
        GridDomain {
            origin: Point::new(
                self.origin.x - left as f64 * self.h,
                self.origin.y - bottom as f64 * self.h,
            ),
            h: self.h,
            nx,
            ny,
            cells,
        }
    }

    /// Mirror image under `x ↦ -x` about the grid's vertical midline.
    pub fn mirrored_x(&self) -> GridDomain {
        let mut d = self.clone();
        for j in 0..self.ny {
            d.cells[j * self.nx..(j + 1) * self.nx].reverse();
        }
        d
    }

    /// Mirror image under `y ↦ -y` about the grid's horizontal midline.
    pub fn mirrored_y(&self) -> GridDomain {
        let mut d = self.clone();
        for j in 0..self.ny {
            let src = &self.cells[(self.ny - 1 - j) * self.nx..(self.ny - j) * self.nx];
            d.cells[j * self.nx..(j + 1) * self.nx].copy_from_slice(src);
        }
        d
    }

    /// Plain-text form: `GRID nx ny h ox oy`, then `ny` rows of `nx`
    /// characters (`#` inside, `.` outside), top row first.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.nx + 1) * self.ny + 64);
        let _ = writeln!(
            s,
            "GRID {} {} {} {} {}",
            self.nx, self.ny, self.h, self.origin.x, self.origin.y
        );
        for j in (0..self.ny).rev() {
            s.extend(
                self.cells[j * self.nx..(j + 1) * self.nx]
                    .iter()
                    .map(|&c| if c { '#' } else { '.' }),
            );
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<GridDomain> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "GRID" {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected 'GRID nx ny h ox oy', got '{header}'"),
            });
        }
        let bad = |what: &str| Error::Parse {
            line: 1,
            message: format!("cannot parse {what}"),
        };
        let nx: usize = fields[1].parse().map_err(|_| bad("nx"))?;
        let ny: usize = fields[2].parse().map_err(|_| bad("ny"))?;
        let h: f64 = fields[3].parse().map_err(|_| bad("h"))?;
        let ox: f64 = fields[4].parse().map_err(|_| bad("ox"))?;
        let oy: f64 = fields[5].parse().map_err(|_| bad("oy"))?;
        let mut cells = vec![false; nx * ny];
        for row in 0..ny {
            let line_no = row + 2;
            let line = lines.next().ok_or(Error::Parse {
                line: line_no,
                message: "missing row".into(),
            })?;
            if line.chars().count() != nx {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {nx} characters"),
                });
            }
            let j = ny - 1 - row;
            for (i, ch) in line.chars().enumerate() {
                cells[j * nx + i] = match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("unexpected character '{other}'"),
                        })
                    }
                };
            }
        }
        GridDomain::new(Point::new(ox, oy), h, nx, ny, cells)
    }
}

/// Two balls of equal radius, disjoint up to `1e-12`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPair {
    pub c1: Point,
    pub c2: Point,
    pub r: f64,
}

impl BallPair {
    pub fn new(c1: Point, c2: Point, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("ball radius {r} must be positive")));
        }
        if c1.dist(c2) < 2.0 * r - 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "balls overlap: center distance {} < 2r = {}",
                c1.dist(c2),
                2.0 * r
            )));
        }
        Ok(BallPair { c1, c2, r })
    }
}

/// Parametric shape families, all centered at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShapeSpec {
    Disk { radius: f64 },
    /// Two disks whose centers are `separation` apart on the x axis.
    TwoDisks { radius: f64, separation: f64 },
    Rectangle { width: f64, height: f64 },
    Ellipse { semi_a: f64, semi_b: f64 },
    /// Two disks joined by a rectangular neck of width `neck`.
    Dumbbell { radius: f64, separation: f64, neck: f64 },
    /// `r < radius (1 + amplitude cos(mode θ))`.
    PerturbedDisk { radius: f64, amplitude: f64, mode: f64 },
}

impl ShapeSpec {
    pub const FAMILIES: [&'static str; 6] = [
        "disk",
        "two_disks",
        "rectangle",
        "ellipse",
        "dumbbell",
        "perturbed_disk",
    ];

    pub fn family(&self) -> &'static str {
        match self {
            ShapeSpec::Disk { .. } => "disk",
            ShapeSpec::TwoDisks { .. } => "two_disks",
            ShapeSpec::Rectangle { .. } => "rectangle",
            ShapeSpec::Ellipse { .. } => "ellipse",
            ShapeSpec::Dumbbell { .. } => "dumbbell",
            ShapeSpec::PerturbedDisk { .. } => "perturbed_disk",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ShapeSpec::Disk { radius } => vec![("radius", radius)],
            ShapeSpec::TwoDisks { radius, separation } => {
                vec![("radius", radius), ("separation", separation)]
            }
            ShapeSpec::Rectangle { width, height } => vec![("width", width), ("height", height)],
            ShapeSpec::Ellipse { semi_a, semi_b } => vec![("semi_a", semi_a), ("semi_b", semi_b)],
            ShapeSpec::Dumbbell {
                radius,
                separation,
                neck,
            } => vec![("radius", radius), ("separation", separation), ("neck", neck)],
            ShapeSpec::PerturbedDisk {
                radius,
                amplitude,
                mode,
            } => vec![("radius", radius), ("amplitude", amplitude), ("mode", mode)],
        }
    }

    /// Build from a family name and named parameters; unknown or missing
    /// names are rejected.
    pub fn from_params(family: &str, params: &BTreeMap<String, f64>) -> Result<ShapeSpec> {
        let get = |name: &str| {
            params.get(name).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("family '{family}' needs parameter '{name}'"))
            })
        };
        let spec = match family {
            "disk" => ShapeSpec::Disk {
                radius: get("radius")?,
            },
            "two_disks" => ShapeSpec::TwoDisks {
                radius: get("radius")?,
                separation: get("separation")?,
            },
            "rectangle" => ShapeSpec::Rectangle {
                width: get("width")?,
                height: get("height")?,
            },
            "ellipse" => ShapeSpec::Ellipse {
                semi_a: get("semi_a")?,
                semi_b: get("semi_b")?,
            },
            "dumbbell" => ShapeSpec::Dumbbell {
                radius: get("radius")?,
                separation: get("separation")?,
                neck: get("neck")?,
            },
            "perturbed_disk" => ShapeSpec::PerturbedDisk {
                radius: get("radius")?,
                amplitude: get("amplitude")?,
                mode: get("mode")?,
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown family '{other}' (expected one of {:?})",
                    Self::FAMILIES
                )))
            }
        };
        let known: Vec<&str> = spec.params().iter().map(|(n, _)| *n).collect();
        if let Some(extra) = params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!(
                "family '{family}' has no parameter '{extra}'"
            )));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.params().iter().any(|(_, v)| !v.is_finite()) {
            return bad(format!("non-finite parameter in {self:?}"));
        }
        match *self {
            ShapeSpec::Disk { radius } if radius <= 0.0 => bad(format!("radius {radius} <= 0")),
            ShapeSpec::TwoDisks { radius, separation } if radius <= 0.0 || separation < 0.0 => {
                bad(format!("two_disks needs radius > 0, separation >= 0"))
            }
            ShapeSpec::Rectangle { width, height } if width <= 0.0 || height <= 0.0 => {
                bad(format!("rectangle {width}x{height} degenerate"))
            }
            ShapeSpec::Ellipse { semi_a, semi_b } if semi_a <= 0.0 || semi_b <= 0.0 => {
                bad(format!("ellipse axes {semi_a}, {semi_b} must be positive"))
            }
            ShapeSpec::Dumbbell {
                radius,
                separation,
                neck,
            } if radius <= 0.0 || separation < 0.0 || !(0.0..radius).contains(&neck) => {
                bad(format!("dumbbell needs radius > 0, separation >= 0, 0 <= neck < radius"))
            }
            ShapeSpec::PerturbedDisk {
                radius,
                amplitude,
                mode,
            } if radius <= 0.0 || !(0.0..0.5).contains(&amplitude) || mode < 0.0 || mode.fract() != 0.0 => {
                bad(format!("perturbed_disk needs radius > 0, 0 <= amplitude < 0.5, integer mode >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Half extents of the bounding box.
    fn half_extents(&self) -> (f64, f64) {
        match *self {
            ShapeSpec::Disk { radius } => (radius, radius),
            ShapeSpec::TwoDisks { radius, separation } => (0.5 * separation + radius, radius),
            ShapeSpec::Rectangle { width, height } => (0.5 * width, 0.5 * height),
            ShapeSpec::Ellipse { semi_a, semi_b } => (semi_a, semi_b),
            ShapeSpec::Dumbbell {
                radius, separation, ..
            } => (0.5 * separation + radius, radius),
            ShapeSpec::PerturbedDisk {
                radius, amplitude, ..
            } => (radius * (1.0 + amplitude), radius * (1.0 + amplitude)),
        }
    }

    /// Open-set membership of a point.
    pub fn contains(&self, p: Point) -> bool {
        let in_disk = |c: Point, r: f64| (p - c).dot(p - c) < r * r;
        match *self {
            ShapeSpec::Disk { radius } => in_disk(Point::default(), radius),
            ShapeSpec::TwoDisks { radius, separation } => {
                in_disk(Point::new(-0.5 * separation, 0.0), radius)
                    || in_disk(Point::new(0.5 * separation, 0.0), radius)
            }
            ShapeSpec::Rectangle { width, height } => {
                p.x.abs() < 0.5 * width && p.y.abs() < 0.5 * height
            }
            ShapeSpec::Ellipse { semi_a, semi_b } => {
                (p.x / semi_a).powi(2) + (p.y / semi_b).powi(2) < 1.0
            }
            ShapeSpec::Dumbbell {
                radius,
                separation,
                neck,
            } => {
                in_disk(Point::new(-0.5 * separation, 0.0), radius)
                    || in_disk(Point::new(0.5 * separation, 0.0), radius)
                    || (p.x.abs() <= 0.5 * separation && p.y.abs() < 0.5 * neck)
            }
            ShapeSpec::PerturbedDisk {
                radius,
                amplitude,
                mode,
            } => p.norm() < radius * (1.0 + amplitude * (mode * p.y.atan2(p.x)).cos()),
        }
    }
}

/// Rasterise a shape: a cell is inside iff its center is. The shape center
/// sits on a grid corner in the middle of a padded box.
pub fn generate(spec: &ShapeSpec, h: f64) -> Result<GridDomain> {
    spec.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("cell size {h} must be positive")));
    }
    let (ex, ey) = spec.half_extents();
    if 2.0 * ex.max(ey) / h < 32.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "h = {h} gives fewer than 32 cells across the shape"
        )));
    }
    let mx = (ex / h).ceil() as usize + 1;
    let my = (ey / h).ceil() as usize + 1;
    let (nx, ny) = (2 * mx, 2 * my);
    let mut cells = vec![false; nx * ny];
    for j in 0..ny {
        let y = (j as f64 + 0.5 - my as f64) * h;
        for i in 0..nx {
            let x = (i as f64 + 0.5 - mx as f64) * h;
            cells[j * nx + i] = spec.contains(Point::new(x, y));
        }
    }
    GridDomain::new(
        Point::new(-(mx as f64) * h, -(my as f64) * h),
        h,
        nx,
        ny,
        cells,
    )
    .map_err(|e| Error::InvalidArgument(format!("{spec:?} at h = {h}: {e}")))
}

pub fn measure(d: &GridDomain) -> f64 {
    d.measure()
}

/// Radius of the ball of measure `|Ω|/2`. Grid domains are planar, so only
/// `N = 2` is accepted.
pub fn r_omega(d: &GridDomain, dimension: u32) -> Result<f64> {
    if dimension != 2 {
        return Err(Error::InvalidArgument(format!(
            "grid domains are planar; r_omega requested for N = {dimension}"
        )));
    }
    Ok((d.measure() / (2.0 * unit_ball_measure(2))).sqrt())
}

pub fn centroid(d: &GridDomain) -> Point {
    d.centroid()
}

/// `|Ω Δ (B ∪ B̃)|`: the intersection is measured per cell with 4×4
/// supersampling, the union measure `2πr²` is exact.
pub fn symdiff_ballpair(d: &GridDomain, p: &BallPair) -> f64 {
    let raster = Raster::new(d);
    let h2 = d.h() * d.h();
    let hits = raster.ball_hits(raster.to_local(d, p.c1), p.r / d.h())
        + raster.ball_hits(raster.to_local(d, p.c2), p.r / d.h());
    let inter = hits as f64 / SAMPLES_PER_CELL as f64 * h2;
    (d.measure() + 2.0 * PI * p.r * p.r - 2.0 * inter).max(0.0)
}

/// Area of the lens `B(c1, r) ∩ B(c2, r)` for centers at distance `dist`.
pub fn lens_area(r: f64, dist: f64) -> f64 {
    if dist >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (dist / (2.0 * r)).acos() - 0.5 * dist * (4.0 * r * r - dist * dist).sqrt()
}

/// The active cells of a domain cropped to their bounding box, with per-row
/// prefix counts. Coordinates are in cell units relative to the lower-left
/// corner of the box, so every computation on a raster is invariant under
/// whole-cell translations of the domain.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Raster {
    pub ni: usize,
    pub nj: usize,
    pub i0: usize,
    pub j0: usize,
    pub active: Vec<bool>,
    prefix: Vec<u32>,
}

impl Raster {
    pub fn new(d: &GridDomain) -> Raster {
        let (i0, j0, i1, j1) = d.bounding_box();
        let (ni, nj) = (i1 - i0, j1 - j0);
        let mut active = vec![false; ni * nj];
        for j in 0..nj {
            for i in 0..ni {
                active[j * ni + i] = d.is_inside(i0 + i, j0 + j);
            }
        }
        Raster::from_parts(ni, nj, i0, j0, active)
    }

    fn from_parts(ni: usize, nj: usize, i0: usize, j0: usize, active: Vec<bool>) -> Raster {
        let mut prefix = vec![0u32; (ni + 1) * nj];
        for j in 0..nj {
            for i in 0..ni {
                prefix[j * (ni + 1) + i + 1] = prefix[j * (ni + 1) + i] + active[j * ni + i] as u32;
            }
        }
        Raster {
            ni,
            nj,
            i0,
            j0,
            active,
            prefix,
        }
    }

    /// Reflection `u ↦ ni - u` (and/or `v ↦ nj - v`) of the cropped table.
    pub fn reflected(&self, flip_x: bool, flip_y: bool) -> Raster {
        let mut active = vec![false; self.active.len()];
        for j in 0..self.nj {
            for i in 0..self.ni {
                let si = if flip_x { self.ni - 1 - i } else { i };
                let sj = if flip_y { self.nj - 1 - j } else { j };
                active[j * self.ni + i] = self.active[sj * self.ni + si];
            }
        }
        Raster::from_parts(self.ni, self.nj, self.i0, self.j0, active)
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[j * self.ni + i]
    }

    pub fn to_local(&self, d: &GridDomain, p: Point) -> (f64, f64) {
        (
            (p.x - d.origin().x) / d.h() - self.i0 as f64,
            (p.y - d.origin().y) / d.h() - self.j0 as f64,
        )
    }

    pub fn to_world(&self, d: &GridDomain, u: f64, v: f64) -> Point {
        Point::new(
            d.origin().x + (u + self.i0 as f64) * d.h(),
            d.origin().y + (v + self.j0 as f64) * d.h(),
        )
    }

    fn row_hits(&self, j: usize, cu: f64, cv: f64, ru: f64) -> u64 {
        let r2 = ru * ru;
        let jf = j as f64;
        let (dy_lo, dy_hi) = ((jf - cv).abs(), (jf + 1.0 - cv).abs());
        let dy_near = if cv >= jf && cv <= jf + 1.0 { 0.0 } else { dy_lo.min(dy_hi) };
        if dy_near >= ru {
            return 0;
        }
        let dy_far = dy_lo.max(dy_hi);
        let ni = self.ni as i64;
        let clamp = |x: i64| x.clamp(0, ni);
        let hout = (r2 - dy_near * dy_near).sqrt() + 1e-9;
        let lo = clamp((cu - hout).floor() as i64);
        let hi = clamp((cu + hout).floor() as i64 + 1);
        // cells fully inside the ball, with a safety margin so that they are
        // exactly the cells whose 16 samples all test inside
        let (full_lo, full_hi) = if dy_far < ru {
            let hin = (r2 - dy_far * dy_far).sqrt() * (1.0 - 1e-12) - 1e-12;
            let a = clamp((cu - hin).ceil() as i64);
            let b = clamp((cu + hin).floor() as i64);
            if b > a {
                (a, b)
            } else {
                (lo, lo)
            }
        } else {
            (lo, lo)
        };
        let row = &self.prefix[j * (self.ni + 1)..(j + 1) * (self.ni + 1)];
        let mut hits = (row[full_hi as usize] - row[full_lo as usize]) as u64 * SAMPLES_PER_CELL;
        let sub = |k: usize| (k as f64 + 0.5) / SUPERSAMPLE as f64;
        let mut dy2 = [0.0; SUPERSAMPLE];
        for (t, d) in dy2.iter_mut().enumerate() {
            *d = (jf + sub(t) - cv).powi(2);
        }
        for i in (lo..full_lo).chain(full_hi.max(lo)..hi) {
            if !self.active[j * self.ni + i as usize] {
                continue;
            }
            for s in 0..SUPERSAMPLE {
                let dx2 = (i as f64 + sub(s) - cu).powi(2);
                hits += dy2.iter().filter(|&&d| dx2 + d < r2).count() as u64;
            }
        }
        hits
    }

    /// Mean of the active cell centers, in cell units.
    pub fn centroid(&self) -> (f64, f64) {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for j in 0..self.nj {
            for i in 0..self.ni {
                if self.is_active(i, j) {
                    su += i as f64 + 0.5;
                    sv += j as f64 + 0.5;
                    n += 1.0;
                }
            }
        }
        (su / n, sv / n)
    }

    /// Two starting centers for two-point searches: the centroids of the two
    /// components when there are exactly two, otherwise the centroids of the
    /// halves on either side of the principal axis through the centroid.
    pub fn structural_seeds(&self) -> ((f64, f64), (f64, f64)) {
        let (ni, nj) = (self.ni, self.nj);
        let mut labels = vec![u32::MAX; ni * nj];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..labels.len() {
            if !self.active[start] || labels[start] != u32::MAX {
                continue;
            }
            labels[start] = count;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = (k % ni, k / ni);
                let mut nbrs = [usize::MAX; 4];
                if i > 0 {
                    nbrs[0] = k - 1;
                }
                if i + 1 < ni {
                    nbrs[1] = k + 1;
                }
                if j > 0 {
                    nbrs[2] = k - ni;
                }
                if j + 1 < nj {
                    nbrs[3] = k + ni;
                }
                for nb in nbrs {
                    if nb != usize::MAX && self.active[nb] && labels[nb] == u32::MAX {
                        labels[nb] = count;
                        stack.push(nb);
                    }
                }
            }
            count += 1;
        }
        let center = |k: usize| ((k % ni) as f64 + 0.5, (k / ni) as f64 + 0.5);
        let mean_of = |sel: &dyn Fn(usize) -> bool| {
            let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
            for k in 0..labels.len() {
                if self.active[k] && sel(k) {
                    let c = center(k);
                    su += c.0;
                    sv += c.1;
                    n += 1.0;
                }
            }
            (n > 0.0).then(|| (su / n, sv / n))
        };
        if count == 2 {
            let a = mean_of(&|k| labels[k] == 0).unwrap();
            let b = mean_of(&|k| labels[k] == 1).unwrap();
            return (a, b);
        }
        let g = self.centroid();
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for k in 0..labels.len() {
            if self.active[k] {
                let c = center(k);
                let (du, dv) = (c.0 - g.0, c.1 - g.1);
                sxx += du * du;
                sxy += du * dv;
                syy += dv * dv;
            }
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (ax, ay) = (theta.cos(), theta.sin());
        let side = |k: usize| {
            let c = center(k);
            (c.0 - g.0) * ax + (c.1 - g.1) * ay < 0.0
        };
        let a = mean_of(&|k| side(k)).unwrap_or(g);
        let b = mean_of(&|k| !side(k)).unwrap_or(g);
        (a, b)
    }

    /// Number of subsample points of active cells inside the open ball of
    /// radius `ru` (cell units) centered at local `(cu, cv)`.
    pub fn ball_hits(&self, (cu, cv): (f64, f64), ru: f64) -> u64 {
        if ru <= 0.0 {
            return 0;
        }
        let j_lo = ((cv - ru).floor() as i64).max(0);
        let j_hi = ((cv + ru).floor() as i64 + 1).min(self.nj as i64);
        (j_lo..j_hi).map(|j| self.row_hits(j as usize, cu, cv, ru)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_hits(r: &Raster, (cu, cv): (f64, f64), ru: f64) -> u64 {
        let mut hits = 0;
        for j in 0..r.nj {
            for i in 0..r.ni {
                if !r.is_active(i, j) {
                    continue;
                }
                for s in 0..4 {
                    for t in 0..4 {
                        let x = i as f64 + (s as f64 + 0.5) / 4.0 - cu;
                        let y = j as f64 + (t as f64 + 0.5) / 4.0 - cv;
                        if x * x + y * y < ru * ru {
                            hits += 1;
                        }
                    }
                }
            }
        }
        hits
    }

    #[test]
    fn disk_measure_converges() {
        let mut errs = Vec::new();
        for k in [32.0, 64.0, 128.0, 256.0] {
            let d = generate(&ShapeSpec::Disk { radius: 1.0 }, 1.0 / k).unwrap();
            let err = (d.measure() - PI).abs();
            assert!(err <= 4.0 / k, "h=1/{k}: {err}");
            errs.push(err);
        }
        assert!(errs[3] < errs[0], "{errs:?}");
    }

    #[test]
    fn rectangle_aligned_measure() {
        let d = generate(&ShapeSpec::Rectangle { width: 1.0, height: 1.0 }, 0.01).unwrap();
        assert_eq!(d.active_count(), 10_000);
        assert!((d.measure() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_disks_components_and_additivity() {
        let d = generate(&ShapeSpec::TwoDisks { radius: 1.0, separation: 4.0 }, 1.0 / 64.0).unwrap();
        assert_eq!(d.component_labels().1, 2);
        let one = generate(&ShapeSpec::Disk { radius: 1.0 }, 1.0 / 64.0).unwrap();
        assert!((d.measure() - 2.0 * one.measure()).abs() < 1e-12);
        assert!((r_omega(&d, 2).unwrap() - 1.0).abs() < 2e-3);
        assert!(r_omega(&d, 3).is_err());
    }

    #[test]
    fn generate_rejects_degenerate() {
        assert!(generate(&ShapeSpec::Disk { radius: -1.0 }, 0.01).is_err());
        assert!(generate(&ShapeSpec::Disk { radius: 1.0 }, 0.5).is_err());
        assert!(generate(&ShapeSpec::Rectangle { width: 0.0, height: 1.0 }, 0.01).is_err());
        assert!(generate(
            &ShapeSpec::Dumbbell { radius: 1.0, separation: 2.5, neck: 1.5 },
            0.01
        )
        .is_err());
        assert!(generate(
            &ShapeSpec::PerturbedDisk { radius: 1.0, amplitude: 0.6, mode: 2.0 },
            0.01
        )
        .is_err());
    }

    #[test]
    fn dumbbell_is_connected() {
        let d = generate(
            &ShapeSpec::Dumbbell { radius: 1.0, separation: 2.5, neck: 0.2 },
            1.0 / 32.0,
        )
        .unwrap();
        assert_eq!(d.component_labels().1, 1);
    }

    #[test]
    fn centroid_symmetry_and_equivariance() {
        let h = 1.0 / 64.0;
        let disk = generate(&ShapeSpec::Disk { radius: 1.0 }, h).unwrap();
        assert!(disk.centroid().norm() < h);
        let two = generate(&ShapeSpec::TwoDisks { radius: 1.0, separation: 3.0 }, h).unwrap();
        assert!(two.centroid().norm() < h);
        let moved = disk.translated(1, 0);
        assert!((moved.centroid().x - disk.centroid().x - h).abs() < 1e-12);
        let padded = disk.padded(3, 0, 0, 2);
        assert!((padded.centroid().x - disk.centroid().x).abs() < 1e-12);
        assert_eq!(padded.measure(), disk.measure());
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let d = generate(
            &ShapeSpec::PerturbedDisk { radius: 1.0, amplitude: 0.2, mode: 3.0 },
            1.0 / 24.0,
        )
        .unwrap()
        .translated(-7, 3);
        let text = d.to_text();
        assert!(text.starts_with(&format!("GRID {} {} ", d.nx(), d.ny())));
        let back = GridDomain::from_text(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn text_parse_errors() {
        assert!(GridDomain::from_text("").is_err());
        assert!(GridDomain::from_text("GRID 3 3 1 0 0\n...\n.#.\n").is_err());
        assert!(GridDomain::from_text("GRID 3 3 1 0 0\n...\n.x.\n...\n").is_err());
        assert!(GridDomain::from_text("GRID 3 3 1 0 0\n...\n#..\n...\n").is_err());
        assert!(GridDomain::from_text("GRID 3 3 1 0 0\n...\n.#.\n...\n").is_ok());
    }

    #[test]
    fn raster_hits_match_brute_force() {
        let d = generate(
            &ShapeSpec::Dumbbell { radius: 1.0, separation: 2.5, neck: 0.3 },
            1.0 / 16.0,
        )
        .unwrap();
        let r = Raster::new(&d);
        for &(cu, cv, ru) in &[
            (10.0, 10.0, 7.3),
            (0.0, 0.0, 12.0),
            (33.7, 15.2, 16.1),
            (50.0, 50.0, 3.0),
            (-5.0, 16.0, 9.99),
            (36.0, 16.0, 16.0),
        ] {
            assert_eq!(r.ball_hits((cu, cv), ru), brute_hits(&r, (cu, cv), ru), "{cu} {cv} {ru}");
        }
    }

    #[test]
    fn symdiff_identical_and_disjoint() {
        let h = 1.0 / 64.0;
        let two = generate(&ShapeSpec::TwoDisks { radius: 1.0, separation: 3.0 }, h).unwrap();
        let p = BallPair::new(Point::new(-1.5, 0.0), Point::new(1.5, 0.0), 1.0).unwrap();
        let perim = 2.0 * 2.0 * PI;
        assert!(symdiff_ballpair(&two, &p) < 4.0 * h * perim);

        let disk = generate(&ShapeSpec::Disk { radius: 1.0 }, h).unwrap();
        let r = 0.5f64.sqrt();
        let far = BallPair::new(Point::new(10.0, 0.0), Point::new(10.0, 5.0), r).unwrap();
        let s = symdiff_ballpair(&disk, &far);
        assert!((s - 2.0 * PI).abs() < 4.0 * h * 2.0 * PI, "{s}");
    }

    #[test]
    fn symdiff_of_offset_pair_matches_lens_formula() {
        let h = 1.0 / 128.0;
        let two = generate(&ShapeSpec::TwoDisks { radius: 1.0, separation: 4.0 }, h).unwrap();
        let delta = 0.1;
        let p = BallPair::new(Point::new(-2.0 + delta, 0.0), Point::new(2.0 + delta, 0.0), 1.0).unwrap();
        let expected = 2.0 * 2.0 * (PI - lens_area(1.0, delta));
        let got = symdiff_ballpair(&two, &p);
        assert!((got - expected).abs() < 4.0 * h * 4.0 * PI, "{got} vs {expected}");
        assert!((got - expected).abs() < 0.01, "{got} vs {expected}");
    }

    #[test]
    fn ballpair_rejects_overlap() {
        assert!(BallPair::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 0.6).is_err());
        assert!(BallPair::new(Point::new(0.0, 0.0), Point::new(1.2, 0.0), 0.6).is_ok());
    }

    #[test]
    fn measure_translation_and_mirror() {
        let d = generate(
            &ShapeSpec::PerturbedDisk { radius: 1.0, amplitude: 0.25, mode: 3.0 },
            1.0 / 32.0,
        )
        .unwrap();
        assert_eq!(d.translated(5, -2).measure(), d.measure());
        assert_eq!(d.mirrored_x().mirrored_x(), d);
        assert_eq!(d.mirrored_y().measure(), d.measure());
        let big = generate(
            &ShapeSpec::PerturbedDisk { radius: 2.0, amplitude: 0.25, mode: 3.0 },
            1.0 / 16.0,
        )
        .unwrap();
        assert!((r_omega(&big, 2).unwrap() - 2.0 * r_omega(&d, 2).unwrap()).abs() < 1e-12);
    }
}
