//! Two-sided daily battle series: loading, validation, slicing and the
//! embedded Kursk tank/artillery data.
//!
//! Side `X` is the Soviet (red) side and `Y` the German (blue) side for the
//! embedded dataset. Everything downstream only cares about the labels.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    X,
    Y,
}

impl Side {
    pub fn opponent(self) -> Side {
        match self {
            Side::X => Side::Y,
            Side::Y => Side::X,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::X => f.write_str("X"),
            Side::Y => f.write_str("Y"),
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "X" | "x" => Ok(Side::X),
            "Y" | "y" => Ok(Side::Y),
            other => Err(Error::InvalidSeries(format!("unknown side `{other}`"))),
        }
    }
}

/// Inclusive range of day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DayWindow {
    pub first: u32,
    pub last: u32,
}

impl DayWindow {
    pub fn new(first: u32, last: u32) -> Result<Self> {
        if first > last {
            return Err(Error::InvalidWindow(format!(
                "first day {first} is after last day {last}"
            )));
        }
        Ok(Self { first, last })
    }

    pub fn contains(&self, day: u32) -> bool {
        (self.first..=self.last).contains(&day)
    }

    pub fn span(&self) -> usize {
        (self.last - self.first) as usize + 1
    }
}

impl fmt::Display for DayWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.first, self.last)
    }
}

impl FromStr for DayWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidWindow(format!("expected first:last, got `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidWindow(format!("bad day index `{v}`")))
        };
        DayWindow::new(parse(a)?, parse(b)?)
    }
}

/// Per-category strength and loss columns for one side, indexed `[category][day]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSeries {
    pub on_hand: Vec<Vec<f64>>,
    pub losses: Vec<Vec<f64>>,
}

/// Daily strengths and losses for two sides over a set of named force
/// categories. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattleSeries {
    days: Vec<u32>,
    categories: Vec<String>,
    x: SideSeries,
    y: SideSeries,
}

impl BattleSeries {
    pub fn new(days: Vec<u32>, categories: Vec<String>, x: SideSeries, y: SideSeries) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::InvalidSeries("series has no days".into()));
        }
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries("days must be strictly ascending".into()));
        }
        if categories.is_empty() {
            return Err(Error::InvalidSeries("series has no categories".into()));
        }
        for (i, c) in categories.iter().enumerate() {
            if categories[..i].contains(c) {
                return Err(Error::InvalidSeries(format!("duplicate category `{c}`")));
            }
        }
        for (side, s) in [(Side::X, &x), (Side::Y, &y)] {
            for (name, cols) in [("on_hand", &s.on_hand), ("losses", &s.losses)] {
                if cols.len() != categories.len() {
                    return Err(Error::InvalidSeries(format!(
                        "side {side} {name}: expected {} categories, got {}",
                        categories.len(),
                        cols.len()
                    )));
                }
                for (c, col) in cols.iter().enumerate() {
                    if col.len() != days.len() {
                        return Err(Error::InvalidSeries(format!(
                            "side {side} {name} `{}`: expected {} days, got {}",
                            categories[c],
                            days.len(),
                            col.len()
                        )));
                    }
                    if let Some((d, v)) = col.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                        return Err(Error::InvalidSeries(format!(
                            "side {side} {name} `{}` day {}: value {v} is not a nonnegative finite number",
                            categories[c], days[d]
                        )));
                    }
                }
            }
        }
        Ok(Self { days, categories, x, y })
    }

    pub fn days(&self) -> &[u32] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    pub fn side(&self, side: Side) -> &SideSeries {
        match side {
            Side::X => &self.x,
            Side::Y => &self.y,
        }
    }

    pub fn on_hand(&self, side: Side, category: usize) -> &[f64] {
        &self.side(side).on_hand[category]
    }

    pub fn losses(&self, side: Side, category: usize) -> &[f64] {
        &self.side(side).losses[category]
    }

    pub fn window(&self) -> DayWindow {
        DayWindow {
            first: self.days[0],
            last: self.days[self.days.len() - 1],
        }
    }

    /// The default fitting window: the full range minus the first day, which
    /// carries pre-battle skirmish losses. Single-day series keep their day.
    pub fn fitting_window(&self) -> DayWindow {
        let full = self.window();
        if self.days.len() > 1 {
            DayWindow {
                first: self.days[1],
                last: full.last,
            }
        } else {
            full
        }
    }

    pub fn slice(&self, window: DayWindow) -> Result<BattleSeries> {
        let full = self.window();
        if window.first < full.first || window.last > full.last || window.first > window.last {
            return Err(Error::WindowOutOfRange {
                first: window.first,
                last: window.last,
                min: full.first,
                max: full.last,
            });
        }
        let idx: Vec<usize> = self
            .days
            .iter()
            .enumerate()
            .filter(|(_, d)| window.contains(**d))
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidWindow(format!("window {window} selects no days")));
        }
        let pick = |cols: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            cols.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect()
        };
        let side = |s: &SideSeries| SideSeries {
            on_hand: pick(&s.on_hand),
            losses: pick(&s.losses),
        };
        Ok(BattleSeries {
            days: idx.iter().map(|&i| self.days[i]).collect(),
            categories: self.categories.clone(),
            x: side(&self.x),
            y: side(&self.y),
        })
    }

    /// Writes the long-format CSV (`day,side,category,on_hand,losses`).
    /// Values use the shortest representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["day", "side", "category", "on_hand", "losses"])?;
        for (d, day) in self.days.iter().enumerate() {
            for side in [Side::X, Side::Y] {
                for (c, cat) in self.categories.iter().enumerate() {
                    w.write_record([
                        day.to_string(),
                        side.to_string(),
                        cat.clone(),
                        self.on_hand(side, c)[d].to_string(),
                        self.losses(side, c)[d].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<BattleSeries> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

/// Parses the long-format CSV. Every problem in the file is collected and
/// reported together, each tied to its line number.
pub fn read_csv<R: Read>(reader: R) -> Result<BattleSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(e.into()),
    };
    if headers.len() == 0 || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::NoDataRows);
    }
    let expected = ["day", "side", "category", "on_hand", "losses"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Validation(vec![RowIssue {
            row: Some(1),
            message: format!(
                "header must be `{}`, got `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        }]));
    }

    let mut issues = Vec::new();
    let mut cells: BTreeMap<(u32, Side, usize), (f64, f64, usize)> = BTreeMap::new();
    let mut categories: Vec<String> = Vec::new();
    let mut cat_index: HashMap<String, usize> = HashMap::new();
    // rows whose key parsed but whose values did not; not also "missing"
    let mut flawed: BTreeSet<(u32, Side, String)> = BTreeSet::new();
    let mut n_rows = 0usize;

    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.push(RowIssue {
                    row: Some(row),
                    message: e.to_string(),
                });
                continue;
            }
        };
        if rec.iter().all(str::is_empty) {
            continue;
        }
        n_rows += 1;
        if rec.len() != 5 {
            issues.push(RowIssue {
                row: Some(row),
                message: format!("expected 5 fields, found {}", rec.len()),
            });
            continue;
        }
        let mut bad = |message: String| {
            issues.push(RowIssue {
                row: Some(row),
                message,
            })
        };
        let day = match rec[0].parse::<u32>() {
            Ok(d) if d >= 1 => Some(d),
            _ => {
                bad(format!("day `{}` is not a positive integer", &rec[0]));
                None
            }
        };
        let side = match rec[1].parse::<Side>() {
            Ok(s) if rec[1] == *"X" || rec[1] == *"Y" => Some(s),
            _ => {
                bad(format!("side `{}` must be X or Y", &rec[1]));
                None
            }
        };
        let category = if rec[2].is_empty() {
            bad("empty category label".into());
            None
        } else {
            Some(rec[2].to_string())
        };
        let mut number = |field: &str, text: &str| match text.parse::<f64>() {
            Ok(v) if !v.is_finite() => {
                bad(format!("{field} `{text}` is not finite"));
                None
            }
            Ok(v) if v < 0.0 => {
                bad(format!("{field} {text} is negative"));
                None
            }
            Ok(v) => Some(v),
            Err(_) => {
                bad(format!("{field} `{text}` is not numeric"));
                None
            }
        };
        let on_hand = number("on_hand", &rec[3]);
        let losses = number("losses", &rec[4]);

        let (Some(day), Some(side), Some(category)) = (day, side, category) else {
            continue;
        };
        let (Some(on_hand), Some(losses)) = (on_hand, losses) else {
            flawed.insert((day, side, category));
            continue;
        };
        let c = *cat_index.entry(category.clone()).or_insert_with(|| {
            categories.push(category.clone());
            categories.len() - 1
        });
        if let Some((_, _, first_row)) = cells.get(&(day, side, c)) {
            issues.push(RowIssue {
                row: Some(row),
                message: format!(
                    "duplicate row for day {day}, side {side}, category `{category}` (first seen on row {first_row})"
                ),
            });
            continue;
        }
        cells.insert((day, side, c), (on_hand, losses, row));
    }

    if n_rows == 0 {
        return Err(Error::NoDataRows);
    }

    let mut days: Vec<u32> = cells.keys().map(|(d, _, _)| *d).collect();
    days.dedup();
    let mut sides = [
        SideSeries {
            on_hand: vec![vec![0.0; days.len()]; categories.len()],
            losses: vec![vec![0.0; days.len()]; categories.len()],
        },
        SideSeries {
            on_hand: vec![vec![0.0; days.len()]; categories.len()],
            losses: vec![vec![0.0; days.len()]; categories.len()],
        },
    ];
    for (d, &day) in days.iter().enumerate() {
        for (s, side) in [Side::X, Side::Y].into_iter().enumerate() {
            for (c, cat) in categories.iter().enumerate() {
                match cells.get(&(day, side, c)) {
                    Some(&(on_hand, losses, _)) => {
                        sides[s].on_hand[c][d] = on_hand;
                        sides[s].losses[c][d] = losses;
                    }
                    None if flawed.contains(&(day, side, cat.clone())) => {}
                    None => issues.push(RowIssue {
                        row: None,
                        message: format!("missing cell: day {day}, side {side}, category `{cat}`"),
                    }),
                }
            }
        }
    }

    if !issues.is_empty() {
        issues.sort_by_key(|i| i.row.unwrap_or(usize::MAX));
        return Err(Error::Validation(issues));
    }
    let [x, y] = sides;
    BattleSeries::new(days, categories, x, y)
}

// Columns: X tank on hand, X tank losses, Y tank on hand, Y tank losses,
// X artillery on hand, X artillery losses, Y artillery on hand, Y artillery losses.
const KURSK_ROWS: [[f64; 8]; 14] = [
    [2396.0, 105.0, 986.0, 198.0, 705.0, 13.0, 1166.0, 24.0],
    [2367.0, 117.0, 749.0, 248.0, 676.0, 30.0, 1161.0, 5.0],
    [2064.0, 259.0, 673.0, 121.0, 661.0, 15.0, 1154.0, 7.0],
    [1754.0, 315.0, 596.0, 108.0, 648.0, 14.0, 1213.0, 13.0],
    [1495.0, 289.0, 490.0, 139.0, 640.0, 9.0, 1210.0, 6.0],
    [1406.0, 157.0, 548.0, 36.0, 629.0, 13.0, 1199.0, 12.0],
    [1351.0, 135.0, 563.0, 63.0, 628.0, 7.0, 1206.0, 15.0],
    [977.0, 414.0, 500.0, 98.0, 613.0, 16.0, 1194.0, 12.0],
    [978.0, 117.0, 495.0, 57.0, 606.0, 10.0, 1187.0, 7.0],
    [907.0, 118.0, 480.0, 46.0, 603.0, 5.0, 1184.0, 5.0],
    [883.0, 96.0, 426.0, 79.0, 601.0, 5.0, 1183.0, 3.0],
    [985.0, 27.0, 495.0, 23.0, 600.0, 3.0, 1179.0, 4.0],
    [978.0, 42.0, 557.0, 7.0, 602.0, 0.0, 1182.0, 2.0],
    [948.0, 85.0, 588.0, 6.0, 591.0, 4.0, 1182.0, 11.0],
];

/// Daily tank and artillery strengths and losses for the 14 days of the
/// Kursk campaign (KOSAVE database). `X` is the Soviet side, `Y` the German.
pub fn kursk_dataset() -> BattleSeries {
    let col = |k: usize| KURSK_ROWS.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let x = SideSeries {
        on_hand: vec![col(0), col(4)],
        losses: vec![col(1), col(5)],
    };
    let y = SideSeries {
        on_hand: vec![col(2), col(6)],
        losses: vec![col(3), col(7)],
    };
    BattleSeries::new(
        (1..=14).collect(),
        vec!["tank".to_string(), "artillery".to_string()],
        x,
        y,
    )
    .expect("embedded dataset is valid")
}
