//! 3x3 cube: facet-level move engine, scrambles, two layer-based solvers and
//! the 324-entry one-hot encoding.
//!
//! Colours are named after their home face. Yellow sits on D and is the
//! first checkpoint (the yellow cross); white is the last layer on U.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajspace_core::{Encoding, MetaValue, Metadata, State, StateDataset, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Face {
    U,
    R,
    F,
    D,
    L,
    B,
}

pub const FACES: [Face; 6] = [Face::U, Face::R, Face::F, Face::D, Face::L, Face::B];

impl Face {
    fn normal(self) -> [i8; 3] {
        match self {
            Face::U => [0, 1, 0],
            Face::R => [1, 0, 0],
            Face::F => [0, 0, 1],
            Face::D => [0, -1, 0],
            Face::L => [-1, 0, 0],
            Face::B => [0, 0, -1],
        }
    }

    /// Name of the colour whose home is this face.
    pub fn color_name(self) -> &'static str {
        match self {
            Face::U => "white",
            Face::R => "red",
            Face::F => "green",
            Face::D => "yellow",
            Face::L => "orange",
            Face::B => "blue",
        }
    }

    fn letter(self) -> char {
        ['U', 'R', 'F', 'D', 'L', 'B'][self as usize]
    }
}

pub const WHITE: u8 = Face::U as u8;
pub const YELLOW: u8 = Face::D as u8;

/// `turns` clockwise quarter turns of `face`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub face: Face,
    pub turns: u8,
}

impl Move {
    pub fn new(face: Face, turns: u8) -> Result<Self, RubikError> {
        if !(1..=3).contains(&turns) {
            return Err(RubikError::Turns(turns));
        }
        Ok(Move { face, turns })
    }

    pub fn inverse(self) -> Move {
        Move {
            face: self.face,
            turns: 4 - self.turns,
        }
    }

    fn index(self) -> usize {
        self.face as usize * 3 + self.turns as usize - 1
    }

    pub fn all() -> impl Iterator<Item = Move> {
        FACES
            .into_iter()
            .flat_map(|face| (1..=3).map(move |turns| Move { face, turns }))
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match self.turns {
            1 => "",
            2 => "2",
            _ => "'",
        };
        write!(f, "{}{suffix}", self.face.letter())
    }
}

impl FromStr for Move {
    type Err = RubikError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let face = match chars.next() {
            Some('U') => Face::U,
            Some('R') => Face::R,
            Some('F') => Face::F,
            Some('D') => Face::D,
            Some('L') => Face::L,
            Some('B') => Face::B,
            _ => return Err(RubikError::Notation(s.into())),
        };
        let turns = match chars.as_str() {
            "" => 1,
            "2" => 2,
            "'" => 3,
            _ => return Err(RubikError::Notation(s.into())),
        };
        Ok(Move { face, turns })
    }
}

/// Parses space-separated moves such as `R U R' U'`.
pub fn parse_moves(text: &str) -> Result<Vec<Move>, RubikError> {
    text.split_whitespace().map(str::parse).collect()
}

pub fn format_moves(moves: &[Move]) -> String {
    moves
        .iter()
        .map(Move::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Error, PartialEq)]
pub enum RubikError {
    #[error("turns must be 1, 2 or 3, got {0}")]
    Turns(u8),
    #[error("bad move notation '{0}'")]
    Notation(String),
    #[error("scramble length must be at least 1")]
    EmptyScramble,
    #[error("invalid cube: {0}")]
    Invalid(String),
    #[error("cube cannot be solved (stuck at {0})")]
    Unsolvable(&'static str),
    #[error(transparent)]
    Dataset(#[from] trajspace_core::DatasetError),
}

struct Geometry {
    position: [[i8; 3]; 54],
    /// `moves[m][i]`: slot that the facet at `i` moves to.
    moves: [[u8; 54]; 18],
    edges: Vec<[usize; 2]>,
    corners: Vec<[usize; 3]>,
}

fn facet_location(slot: usize) -> ([i8; 3], [i8; 3]) {
    let face = FACES[slot / 9];
    let (row, col) = ((slot % 9 / 3) as i8, (slot % 3) as i8);
    let pos = match face {
        Face::U => [col - 1, 1, row - 1],
        Face::R => [1, 1 - row, 1 - col],
        Face::F => [col - 1, 1 - row, 1],
        Face::D => [col - 1, -1, 1 - row],
        Face::L => [-1, 1 - row, col - 1],
        Face::B => [1 - col, 1 - row, -1],
    };
    (pos, face.normal())
}

fn dot(a: [i8; 3], b: [i8; 3]) -> i8 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Clockwise quarter turn about outward axis `a`: v -> a(a.v) - a x v.
fn rotate(a: [i8; 3], v: [i8; 3]) -> [i8; 3] {
    let cross = [
        a[1] * v[2] - a[2] * v[1],
        a[2] * v[0] - a[0] * v[2],
        a[0] * v[1] - a[1] * v[0],
    ];
    let d = dot(a, v);
    [
        a[0] * d - cross[0],
        a[1] * d - cross[1],
        a[2] * d - cross[2],
    ]
}

fn geometry() -> &'static Geometry {
    static GEOMETRY: OnceLock<Geometry> = OnceLock::new();
    GEOMETRY.get_or_init(|| {
        let locations: Vec<([i8; 3], [i8; 3])> = (0..54).map(facet_location).collect();
        let slot_of: HashMap<([i8; 3], [i8; 3]), usize> =
            locations.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut moves = [[0u8; 54]; 18];
        for face in FACES {
            let a = face.normal();
            let mut quarter = [0u8; 54];
            for (i, &(p, n)) in locations.iter().enumerate() {
                quarter[i] = if dot(p, a) == 1 {
                    slot_of[&(rotate(a, p), rotate(a, n))] as u8
                } else {
                    i as u8
                };
            }
            let mut current: [u8; 54] = std::array::from_fn(|i| i as u8);
            for turns in 0..3 {
                current = std::array::from_fn(|i| quarter[current[i] as usize]);
                moves[face as usize * 3 + turns] = current;
            }
        }
        let mut cubies: HashMap<[i8; 3], Vec<usize>> = HashMap::new();
        for (i, &(p, _)) in locations.iter().enumerate() {
            cubies.entry(p).or_default().push(i);
        }
        let mut keys: Vec<[i8; 3]> = cubies.keys().copied().collect();
        keys.sort();
        let mut edges = Vec::new();
        let mut corners = Vec::new();
        for k in keys {
            let slots = &cubies[&k];
            match slots.len() {
                2 => edges.push([slots[0], slots[1]]),
                3 => corners.push([slots[0], slots[1], slots[2]]),
                _ => {}
            }
        }
        Geometry {
            position: std::array::from_fn(|i| locations[i].0),
            moves,
            edges,
            corners,
        }
    })
}

/// Facet slot of the sticker at face `face`, row `row`, column `col`.
pub fn slot(face: Face, row: usize, col: usize) -> usize {
    face as usize * 9 + row * 3 + col
}

/// Colours of the 54 facets, face by face (U, R, F, D, L, B), each face row
/// by row.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cube {
    facets: Vec<u8>,
}

impl fmt::Debug for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for face in FACES {
            write!(f, "{}:", face.letter())?;
            for &c in &self.facets[face as usize * 9..face as usize * 9 + 9] {
                write!(f, "{}", FACES[c as usize].letter())?;
            }
            f.write_str(" ")?;
        }
        Ok(())
    }
}

impl Default for Cube {
    fn default() -> Self {
        Cube::solved()
    }
}

impl Cube {
    pub fn solved() -> Self {
        Cube {
            facets: (0..54).map(|i| (i / 9) as u8).collect(),
        }
    }

    /// Accepts facet colours after checking counts, centres and pieces.
    pub fn from_facets(facets: Vec<u8>) -> Result<Self, RubikError> {
        if facets.len() != 54 {
            return Err(RubikError::Invalid(format!("{} facets", facets.len())));
        }
        if let Some(&c) = facets.iter().find(|&&c| c > 5) {
            return Err(RubikError::Invalid(format!("colour {c}")));
        }
        for colour in 0..6u8 {
            let n = facets.iter().filter(|&&c| c == colour).count();
            if n != 9 {
                return Err(RubikError::Invalid(format!(
                    "{n} facets of colour {colour}"
                )));
            }
            if facets[colour as usize * 9 + 4] != colour {
                return Err(RubikError::Invalid("centre facets moved".into()));
            }
        }
        let cube = Cube { facets };
        let g = geometry();
        let solved = Cube::solved();
        let mut expected: Vec<Vec<u8>> = g
            .edges
            .iter()
            .map(|e| sorted(e.iter().map(|&s| solved.facets[s])))
            .collect();
        let mut found: Vec<Vec<u8>> = g
            .edges
            .iter()
            .map(|e| sorted(e.iter().map(|&s| cube.facets[s])))
            .collect();
        expected.sort();
        found.sort();
        if expected != found {
            return Err(RubikError::Invalid(
                "edge pieces do not match a real cube".into(),
            ));
        }
        let mut expected: Vec<Vec<u8>> = g
            .corners
            .iter()
            .map(|c| sorted(c.iter().map(|&s| solved.facets[s])))
            .collect();
        let mut found: Vec<Vec<u8>> = g
            .corners
            .iter()
            .map(|c| sorted(c.iter().map(|&s| cube.facets[s])))
            .collect();
        expected.sort();
        found.sort();
        if expected != found {
            return Err(RubikError::Invalid(
                "corner pieces do not match a real cube".into(),
            ));
        }
        Ok(cube)
    }

    pub fn facets(&self) -> &[u8] {
        &self.facets
    }

    pub fn apply(&self, m: Move) -> Cube {
        let dest = &geometry().moves[m.index()];
        let mut facets = vec![0u8; 54];
        for (i, &c) in self.facets.iter().enumerate() {
            facets[dest[i] as usize] = c;
        }
        Cube { facets }
    }

    pub fn apply_all(&self, moves: &[Move]) -> Cube {
        moves.iter().fold(self.clone(), |c, &m| c.apply(m))
    }

    pub fn is_solved(&self) -> bool {
        self.facets
            .iter()
            .enumerate()
            .all(|(i, &c)| c as usize == i / 9)
    }

    pub fn state(&self) -> State {
        State::Symbols(self.facets.clone())
    }

    /// True when every facet of every cubie passing `keep` is at home.
    fn cubies_home(&self, keep: impl Fn([i8; 3]) -> bool) -> bool {
        let g = geometry();
        self.facets
            .iter()
            .enumerate()
            .all(|(i, &c)| !keep(g.position[i]) || c as usize == i / 9)
    }

    pub fn reached(&self, stage: Stage) -> bool {
        let edge = |p: [i8; 3]| p.iter().filter(|&&v| v != 0).count() == 2;
        match stage {
            Stage::Cross => self.cubies_home(|p| p[1] == -1 && edge(p)),
            Stage::FirstLayer => self.cubies_home(|p| p[1] == -1),
            Stage::SecondLayer => self.cubies_home(|p| p[1] <= 0),
            Stage::LastLayerCross => {
                self.reached(Stage::SecondLayer)
                    && [1, 3, 5, 7]
                        .iter()
                        .all(|&k| self.facets[slot(Face::U, k / 3, k % 3)] == WHITE)
            }
            Stage::LastLayerOriented => {
                self.reached(Stage::SecondLayer) && self.facets[..9].iter().all(|&c| c == WHITE)
            }
            Stage::Solved => self.is_solved(),
        }
    }
}

fn sorted(it: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut v: Vec<u8> = it.collect();
    v.sort();
    v
}

pub fn encoding() -> Encoding {
    Encoding::OneHot {
        length: 54,
        categories: 6,
        blank: None,
    }
}

/// 54 facets, one-hot over 6 colours: 324 entries with exactly 54 ones.
pub fn encode_cube(cube: &Cube) -> Vec<f64> {
    encoding().encode(&cube.state())
}

/// `k` uniformly drawn face moves applied to the solved cube.
pub fn scramble(seed: u64, k: usize) -> Result<(Cube, Vec<Move>), RubikError> {
    if k == 0 {
        return Err(RubikError::EmptyScramble);
    }
    let all: Vec<Move> = Move::all().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moves: Vec<Move> = (0..k)
        .map(|_| all[rng.random_range(0..all.len())])
        .collect();
    Ok((Cube::solved().apply_all(&moves), moves))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Yellow cross on the D face.
    Cross,
    FirstLayer,
    /// First two layers complete.
    SecondLayer,
    LastLayerCross,
    LastLayerOriented,
    Solved,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Cross => "yellow-cross",
            Stage::FirstLayer => "first-layer",
            Stage::SecondLayer => "first-two-layers",
            Stage::LastLayerCross => "last-layer-cross",
            Stage::LastLayerOriented => "last-layer-oriented",
            Stage::Solved => "solved",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Beginner,
    Advanced,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Beginner => "beginner",
            Method::Advanced => "advanced",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "beginner" => Some(Method::Beginner),
            "advanced" | "cfop" | "fridrich" => Some(Method::Advanced),
            _ => None,
        }
    }

    /// Checkpoints flagged in this method's traces, in solving order.
    pub fn checkpoints(self) -> &'static [Stage] {
        match self {
            Method::Beginner => &[
                Stage::Cross,
                Stage::FirstLayer,
                Stage::SecondLayer,
                Stage::LastLayerCross,
                Stage::LastLayerOriented,
                Stage::Solved,
            ],
            Method::Advanced => &[
                Stage::Cross,
                Stage::SecondLayer,
                Stage::LastLayerOriented,
                Stage::Solved,
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionTrace {
    pub method: Method,
    pub states: Vec<Cube>,
    pub moves: Vec<Move>,
    /// `(state index, stage)` for every checkpoint, in order.
    pub checkpoints: Vec<(usize, Stage)>,
}

impl SolutionTrace {
    pub fn checkpoint_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.states.len()];
        for &(i, _) in &self.checkpoints {
            flags[i] = true;
        }
        flags
    }

    /// State index at which `stage` was flagged.
    pub fn checkpoint(&self, stage: Stage) -> Option<usize> {
        self.checkpoints.iter().find(|c| c.1 == stage).map(|c| c.0)
    }

    /// Latest stage flagged at each state.
    pub fn stage_at(&self) -> Vec<Option<Stage>> {
        let mut out = vec![None; self.states.len()];
        for &(i, s) in &self.checkpoints {
            out[i] = Some(s);
        }
        out
    }
}

struct Macro {
    moves: Vec<Move>,
    auf: bool,
}

fn macros(texts: &[&str]) -> Vec<Macro> {
    let mut out: Vec<Macro> = ["U", "U2", "U'"]
        .iter()
        .map(|t| Macro {
            moves: parse_moves(t).expect("valid notation"),
            auf: true,
        })
        .collect();
    out.extend(texts.iter().map(|t| Macro {
        moves: parse_moves(t).expect("valid notation"),
        auf: false,
    }));
    out
}

/// Shortest macro sequence (then first in macro order) reaching `goal`.
fn macro_search(
    cube: &Cube,
    set: &[Macro],
    goal: &dyn Fn(&Cube) -> bool,
    max_depth: usize,
) -> Option<Vec<Move>> {
    fn dfs(
        cube: &Cube,
        set: &[Macro],
        goal: &dyn Fn(&Cube) -> bool,
        depth: usize,
        last_auf: bool,
        path: &mut Vec<usize>,
    ) -> bool {
        if depth == 0 {
            return goal(cube);
        }
        for (k, m) in set.iter().enumerate() {
            if m.auf && last_auf {
                continue;
            }
            path.push(k);
            if dfs(&cube.apply_all(&m.moves), set, goal, depth - 1, m.auf, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    for depth in 0..=max_depth {
        let mut path = Vec::new();
        if dfs(cube, set, goal, depth, false, &mut path) {
            return Some(
                path.iter()
                    .flat_map(|&k| set[k].moves.iter().copied())
                    .collect(),
            );
        }
    }
    None
}

const CROSS_EDGES: [usize; 4] = [28, 30, 32, 34];

struct CrossTable {
    sticker: [u8; 54],
    distance: Vec<u8>,
}

fn cross_key(slots: [usize; 4], sticker: &[u8; 54]) -> usize {
    slots.iter().fold(0, |k, &s| k * 24 + sticker[s] as usize)
}

/// Distance (in face moves) of every placement of the four yellow edge
/// stickers from the solved cross.
fn cross_table() -> &'static CrossTable {
    static TABLE: OnceLock<CrossTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let g = geometry();
        let mut sticker = [u8::MAX; 54];
        let mut slots_of = Vec::new();
        for e in &g.edges {
            for &s in e {
                sticker[s] = slots_of.len() as u8;
                slots_of.push(s);
            }
        }
        let mut distance = vec![u8::MAX; 24usize.pow(4)];
        let start = CROSS_EDGES;
        distance[cross_key(start, &sticker)] = 0;
        let mut frontier = vec![start];
        let mut d = 0u8;
        while !frontier.is_empty() {
            d += 1;
            let mut next = Vec::new();
            for state in frontier {
                for m in &g.moves {
                    let moved = state.map(|s| m[s] as usize);
                    let key = cross_key(moved, &sticker);
                    if distance[key] == u8::MAX {
                        distance[key] = d;
                        next.push(moved);
                    }
                }
            }
            frontier = next;
        }
        CrossTable { sticker, distance }
    })
}

fn solve_cross(cube: &Cube) -> Result<Vec<Move>, RubikError> {
    let g = geometry();
    let table = cross_table();
    let solved = Cube::solved();
    // Current slot of the yellow sticker of each cross edge.
    let locate = |cube: &Cube| -> [usize; 4] {
        CROSS_EDGES.map(|home| {
            let pair = g
                .edges
                .iter()
                .find(|e| e.contains(&home))
                .expect("cross edge");
            let want = sorted(pair.iter().map(|&s| solved.facets[s]));
            let e = g
                .edges
                .iter()
                .find(|e| sorted(e.iter().map(|&s| cube.facets[s])) == want)
                .expect("validated cube");
            if cube.facets[e[0]] == YELLOW {
                e[0]
            } else {
                e[1]
            }
        })
    };
    let mut state = locate(cube);
    let mut moves = Vec::new();
    loop {
        let d = table.distance[cross_key(state, &table.sticker)];
        if d == 0 {
            return Ok(moves);
        }
        let (m, next) = Move::all()
            .map(|m| (m, state.map(|s| g.moves[m.index()][s] as usize)))
            .find(|(_, next)| table.distance[cross_key(*next, &table.sticker)] < d)
            .ok_or(RubikError::Unsolvable("cross"))?;
        moves.push(m);
        state = next;
    }
}

/// D-layer corner slots as `(x, z)` with the face turned by `R U R' U'`
/// seen from that slot.
const CORNER_SLOTS: [([i8; 2], Face); 4] = [
    ([1, 1], Face::R),
    ([-1, 1], Face::F),
    ([-1, -1], Face::L),
    ([1, -1], Face::B),
];

fn sexy(face: Face) -> Vec<Move> {
    vec![
        Move { face, turns: 1 },
        Move {
            face: Face::U,
            turns: 1,
        },
        Move { face, turns: 3 },
        Move {
            face: Face::U,
            turns: 3,
        },
    ]
}

fn corner_position(cube: &Cube, colours: &[u8]) -> [i8; 3] {
    let g = geometry();
    let c = g
        .corners
        .iter()
        .find(|c| sorted(c.iter().map(|&s| cube.facets[s])) == colours)
        .expect("validated cube");
    g.position[c[0]]
}

fn solve_first_layer(cube: &Cube) -> Result<Vec<Move>, RubikError> {
    let mut cube = cube.clone();
    let mut moves = Vec::new();
    fn push(cube: &mut Cube, seq: Vec<Move>, moves: &mut Vec<Move>) {
        *cube = cube.apply_all(&seq);
        moves.extend(seq);
    }
    let solved = Cube::solved();
    for (k, &([x, z], face)) in CORNER_SLOTS.iter().enumerate() {
        let g = geometry();
        let home = g
            .corners
            .iter()
            .find(|c| g.position[c[0]] == [x, -1, z])
            .expect("corner slot");
        let colours = sorted(home.iter().map(|&s| solved.facets[s]));
        let done_before: Vec<[i8; 2]> = CORNER_SLOTS[..k].iter().map(|s| s.0).collect();
        let target_done = |c: &Cube| {
            c.reached(Stage::Cross)
                && c.cubies_home(|p| {
                    p[1] == -1
                        && p[0] != 0
                        && p[2] != 0
                        && (p[0] == x && p[2] == z || done_before.contains(&[p[0], p[2]]))
                })
        };
        let mut guard = 0;
        while !target_done(&cube) {
            guard += 1;
            if guard > 12 {
                return Err(RubikError::Unsolvable("first layer"));
            }
            let p = corner_position(&cube, &colours);
            if p[1] == -1 {
                let (_, f) = CORNER_SLOTS
                    .iter()
                    .find(|s| s.0 == [p[0], p[2]])
                    .expect("slot");
                push(&mut cube, sexy(*f), &mut moves);
                continue;
            }
            let mut turns = 0;
            while {
                let p = corner_position(&cube, &colours);
                [p[0], p[2]] != [x, z]
            } {
                cube = cube.apply(Move {
                    face: Face::U,
                    turns: 1,
                });
                turns += 1;
            }
            if turns > 0 {
                moves.push(Move {
                    face: Face::U,
                    turns,
                });
            }
            for _ in 0..6 {
                if target_done(&cube) {
                    break;
                }
                push(&mut cube, sexy(face), &mut moves);
            }
        }
    }
    Ok(moves)
}

/// Middle-layer slots as (front, right) pairs.
const EDGE_SLOTS: [(Face, Face); 4] = [
    (Face::F, Face::R),
    (Face::R, Face::B),
    (Face::B, Face::L),
    (Face::L, Face::F),
];

fn insertion_macros() -> Vec<Macro> {
    let mut texts = Vec::new();
    for (f, r) in EDGE_SLOTS {
        let (f, r) = (f.letter(), r.letter());
        texts.push(format!("U {r} U' {r}' U' {f}' U {f}"));
        // same slot entered from its right-hand face
        texts.push(format!("U' {f}' U {f} U {r} U' {r}'"));
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    macros(&refs)
}

fn solve_second_layer(cube: &Cube) -> Result<Vec<Move>, RubikError> {
    let set = insertion_macros();
    let mut cube = cube.clone();
    let mut moves = Vec::new();
    let mut done: Vec<[i8; 2]> = Vec::new();
    for (f, r) in EDGE_SLOTS {
        let (nf, nr) = (f.normal(), r.normal());
        let target = [nf[0] + nr[0], nf[2] + nr[2]];
        let solved_so_far = done.clone();
        let goal = move |c: &Cube| {
            c.reached(Stage::FirstLayer)
                && c.cubies_home(|p| {
                    p[1] == 0 && (target == [p[0], p[2]] || solved_so_far.contains(&[p[0], p[2]]))
                })
        };
        let seq =
            macro_search(&cube, &set, &goal, 4).ok_or(RubikError::Unsolvable("second layer"))?;
        cube = cube.apply_all(&seq);
        moves.extend(seq);
        done.push(target);
    }
    Ok(moves)
}

const EO_LINE: &str = "F R U R' U' F'";
const EO_ANGLE: &str = "F U R U' R' F'";
const SUNE: &str = "R U R' U R U2 R'";
const ANTISUNE: &str = "R U2 R' U' R U' R'";
const OLL_H: &str = "R U R' U R U' R' U R U2 R'";
const OLL_PI: &str = "R U2 R2 U' R2 U' R2 U2 R";
const OLL_HEADLIGHTS: &str = "R2 D R' U2 R D' R' U2 R'";
const PLL_A: &str = "R' F R' B2 R F' R' B2 R2";
const PLL_Y: &str = "F R U' R' U' R U R' F' R U R' U' R' F R F'";
const PLL_UA: &str = "R U' R U R U R U' R' U' R2";
const PLL_UB: &str = "R2 U R U R' U' R' U' R' U R'";
const PLL_H: &str = "R2 U2 R U2 R2 U2 R2 U2 R U2 R2";

/// Twists each last-layer corner in turn at UFR with repeated `R' D' R D`;
/// the first two layers come back once all four are oriented.
fn orient_with_coils(cube: &Cube) -> Result<Vec<Move>, RubikError> {
    let coil = parse_moves("R' D' R D").expect("valid notation");
    let mut cube = cube.clone();
    let mut moves = Vec::new();
    for _ in 0..4 {
        let mut twists = 0;
        while cube.facets[slot(Face::U, 2, 2)] != WHITE {
            twists += 1;
            if twists > 6 {
                return Err(RubikError::Unsolvable("last-layer orientation"));
            }
            cube = cube.apply_all(&coil);
            moves.extend_from_slice(&coil);
        }
        if cube.reached(Stage::LastLayerOriented) {
            return Ok(moves);
        }
        cube = cube.apply(Move {
            face: Face::U,
            turns: 1,
        });
        moves.push(Move {
            face: Face::U,
            turns: 1,
        });
    }
    Err(RubikError::Unsolvable("last-layer orientation"))
}

fn corners_placed(c: &Cube) -> bool {
    let mut c = c.clone();
    for _ in 0..4 {
        if c.cubies_home(|p| p[1] == 1 && p[0] != 0 && p[2] != 0) {
            return true;
        }
        c = c.apply(Move {
            face: Face::U,
            turns: 1,
        });
    }
    false
}

/// An empty algorithm list means corner twisting with `R' D' R D`.
struct LastLayerStep {
    algorithms: &'static [&'static str],
    goal: fn(&Cube) -> bool,
    depth: usize,
    reaches: Option<Stage>,
}

fn last_layer_plan(method: Method) -> Vec<LastLayerStep> {
    match method {
        Method::Beginner => vec![
            LastLayerStep {
                algorithms: &[EO_LINE],
                goal: |c| c.reached(Stage::LastLayerCross),
                depth: 6,
                reaches: Some(Stage::LastLayerCross),
            },
            LastLayerStep {
                algorithms: &[],
                goal: |c| c.reached(Stage::LastLayerOriented),
                depth: 0,
                reaches: Some(Stage::LastLayerOriented),
            },
            LastLayerStep {
                algorithms: &[PLL_A],
                goal: |c| c.reached(Stage::LastLayerOriented) && corners_placed(c),
                depth: 5,
                reaches: None,
            },
            LastLayerStep {
                algorithms: &[PLL_UA],
                goal: |c| c.is_solved(),
                depth: 8,
                reaches: Some(Stage::Solved),
            },
        ],
        Method::Advanced => vec![
            LastLayerStep {
                algorithms: &[EO_LINE, EO_ANGLE],
                goal: |c| c.reached(Stage::LastLayerCross),
                depth: 5,
                reaches: None,
            },
            LastLayerStep {
                algorithms: &[SUNE, ANTISUNE, OLL_H, OLL_PI, OLL_HEADLIGHTS],
                goal: |c| c.reached(Stage::LastLayerOriented),
                depth: 5,
                reaches: Some(Stage::LastLayerOriented),
            },
            LastLayerStep {
                algorithms: &[PLL_A, PLL_Y],
                goal: |c| c.reached(Stage::LastLayerOriented) && corners_placed(c),
                depth: 4,
                reaches: None,
            },
            LastLayerStep {
                algorithms: &[PLL_UA, PLL_UB, PLL_H],
                goal: |c| c.is_solved(),
                depth: 5,
                reaches: Some(Stage::Solved),
            },
        ],
    }
}

/// Merges consecutive turns of the same face.
fn simplify(moves: Vec<Move>) -> Vec<Move> {
    let mut out: Vec<Move> = Vec::with_capacity(moves.len());
    for m in moves {
        match out.last_mut() {
            Some(last) if last.face == m.face => {
                let turns = (last.turns + m.turns) % 4;
                if turns == 0 {
                    out.pop();
                } else {
                    last.turns = turns;
                }
            }
            _ => out.push(m),
        }
    }
    out
}

/// Solves `cube` stage by stage, recording every intermediate state.
///
/// Both methods build the yellow cross and the first two layers the same
/// way, so they share one path up to that checkpoint. The beginner method
/// then fixes the last layer one property at a time with a single algorithm
/// per step; the advanced method uses two-look orientation and permutation.
pub fn solve(cube: &Cube, method: Method) -> Result<SolutionTrace, RubikError> {
    let cube = Cube::from_facets(cube.facets.clone())?;
    let mut trace = SolutionTrace {
        method,
        states: vec![cube.clone()],
        moves: Vec::new(),
        checkpoints: Vec::new(),
    };
    let flagged = method.checkpoints();
    let mut current = cube;
    let run =
        |trace: &mut SolutionTrace, current: &mut Cube, moves: Vec<Move>, stage: Option<Stage>| {
            for m in simplify(moves) {
                *current = current.apply(m);
                trace.moves.push(m);
                trace.states.push(current.clone());
            }
            if let Some(s) = stage {
                if flagged.contains(&s) {
                    trace.checkpoints.push((trace.states.len() - 1, s));
                }
            }
        };
    let seq = solve_cross(&current)?;
    run(&mut trace, &mut current, seq, Some(Stage::Cross));
    let seq = solve_first_layer(&current)?;
    run(&mut trace, &mut current, seq, Some(Stage::FirstLayer));
    let seq = solve_second_layer(&current)?;
    run(&mut trace, &mut current, seq, Some(Stage::SecondLayer));
    for step in last_layer_plan(method) {
        let seq = if step.algorithms.is_empty() {
            orient_with_coils(&current)?
        } else {
            let set = macros(step.algorithms);
            macro_search(&current, &set, &step.goal, step.depth)
                .ok_or(RubikError::Unsolvable("last layer"))?
        };
        run(&mut trace, &mut current, seq, step.reaches);
    }
    if !current.is_solved() {
        return Err(RubikError::Unsolvable("final state"));
    }
    Ok(trace)
}

pub fn solve_beginner(cube: &Cube) -> Result<SolutionTrace, RubikError> {
    solve(cube, Method::Beginner)
}

pub fn solve_advanced(cube: &Cube) -> Result<SolutionTrace, RubikError> {
    solve(cube, Method::Advanced)
}

/// Facets of the first two layers (everything off the U face and outside
/// the top row of each side).
pub fn first_two_layer_facets(cube: &Cube) -> Vec<u8> {
    let g = geometry();
    (0..54)
        .filter(|&i| g.position[i][1] <= 0)
        .map(|i| cube.facets[i])
        .collect()
}

/// Dataset of `count` scrambles, each solved by every method in `methods`.
/// Scramble `i` uses seed `seed + i`.
pub fn rubik_dataset(
    count: usize,
    methods: &[Method],
    seed: u64,
    scramble_len: usize,
) -> Result<StateDataset, RubikError> {
    let mut trajectories = Vec::new();
    for i in 0..count {
        let (cube, scramble_moves) = scramble(seed.wrapping_add(i as u64), scramble_len)?;
        for &method in methods {
            let trace = solve(&cube, method)?;
            trajectories.push(trace_to_trajectory(
                &trace,
                &format!("{}:{i:04}", method.name()),
                &scramble_moves,
            ));
        }
    }
    Ok(StateDataset::build("rubik", encoding(), trajectories)?)
}

pub fn trace_to_trajectory(trace: &SolutionTrace, id: &str, scramble_moves: &[Move]) -> Trajectory {
    let mut labels = Metadata::new();
    labels.insert("method".into(), trace.method.name().into());
    labels.insert("moves".into(), trace.moves.len().into());
    labels.insert(
        "scramble".into(),
        MetaValue::Text(format_moves(scramble_moves)),
    );
    let stages = trace.stage_at();
    let last = trace.states.len() - 1;
    let points = trace.states.iter().enumerate().map(|(i, cube)| {
        let mut meta = Metadata::new();
        meta.insert("checkpoint".into(), (stages[i].is_some()).into());
        if let Some(stage) = stages[i] {
            meta.insert("stage".into(), stage.name().into());
        }
        meta.insert(
            "progress".into(),
            if last == 0 {
                1.0
            } else {
                i as f64 / last as f64
            }
            .into(),
        );
        if i > 0 {
            meta.insert(
                "move".into(),
                MetaValue::Text(trace.moves[i - 1].to_string()),
            );
        }
        (cube.state(), meta)
    });
    Trajectory::from_states(id, labels, points)
}
