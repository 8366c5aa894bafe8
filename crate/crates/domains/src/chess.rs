//! Chess games as state trajectories: a board engine that replays standard
//! algebraic notation, a PGN reader and the 832-entry board encoding.
//!
//! Each of the 64 squares gets a 13-wide slot. A piece sets one bit; an empty
//! square leaves the slot all zero, so a plain move changes two bits, a capture
//! three and castling four.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajspace_core::{Encoding, MetaValue, Metadata, State, StateDataset, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    White,
    Black,
}

impl Color {
    pub fn other(self) -> Color {
        match self {
            Color::White => Color::Black,
            Color::Black => Color::White,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::White => "white",
            Color::Black => "black",
        }
    }

    fn forward(self) -> i8 {
        match self {
            Color::White => 1,
            Color::Black => -1,
        }
    }

    fn home_rank(self) -> i8 {
        match self {
            Color::White => 0,
            Color::Black => 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Pawn,
    Knight,
    Bishop,
    Rook,
    Queen,
    King,
}

impl Kind {
    fn from_letter(c: char) -> Option<Kind> {
        Some(match c.to_ascii_uppercase() {
            'P' => Kind::Pawn,
            'N' => Kind::Knight,
            'B' => Kind::Bishop,
            'R' => Kind::Rook,
            'Q' => Kind::Queen,
            'K' => Kind::King,
            _ => return None,
        })
    }

    fn letter(self) -> char {
        ['P', 'N', 'B', 'R', 'Q', 'K'][self as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Piece {
    pub color: Color,
    pub kind: Kind,
}

impl Piece {
    /// Slot position: white pawn..king are 0..=5, black 6..=11.
    pub fn index(self) -> u8 {
        self.color as u8 * 6 + self.kind as u8
    }

    fn fen_char(self) -> char {
        let c = self.kind.letter();
        match self.color {
            Color::White => c,
            Color::Black => c.to_ascii_lowercase(),
        }
    }
}

/// Symbol for an empty square; it encodes as an all-zero slot.
pub const EMPTY: u8 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoveKind {
    Simple,
    Capture,
    Castling,
    Promotion,
    EnPassant,
    PromotionCapture,
}

impl MoveKind {
    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Simple => "simple",
            MoveKind::Capture => "capture",
            MoveKind::Castling => "castling",
            MoveKind::Promotion => "promotion",
            MoveKind::EnPassant => "en-passant",
            MoveKind::PromotionCapture => "promotion-capture",
        }
    }

    /// Euclidean distance between consecutive encoded boards.
    pub fn distance(self) -> f64 {
        match self {
            MoveKind::Simple | MoveKind::Promotion => 2f64.sqrt(),
            MoveKind::Capture | MoveKind::EnPassant | MoveKind::PromotionCapture => 3f64.sqrt(),
            MoveKind::Castling => 2.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChessError {
    #[error("bad FEN: {0}")]
    Fen(String),
    #[error("cannot read SAN '{0}'")]
    Notation(String),
    #[error("illegal move '{0}'")]
    Illegal(String),
    #[error("ambiguous move '{san}': candidates {candidates:?}")]
    Ambiguous {
        san: String,
        candidates: Vec<String>,
    },
    #[error("half-move {index}: {source}")]
    AtHalfMove {
        index: usize,
        #[source]
        source: Box<ChessError>,
    },
    #[error(transparent)]
    Dataset(#[from] trajspace_core::DatasetError),
}

pub type Square = u8;

fn square(file: i8, rank: i8) -> Option<Square> {
    ((0..8).contains(&file) && (0..8).contains(&rank)).then(|| (rank * 8 + file) as Square)
}

fn file_of(sq: Square) -> i8 {
    (sq % 8) as i8
}

fn rank_of(sq: Square) -> i8 {
    (sq / 8) as i8
}

pub fn square_name(sq: Square) -> String {
    format!("{}{}", (b'a' + sq % 8) as char, sq / 8 + 1)
}

fn parse_square(s: &str) -> Option<Square> {
    let b = s.as_bytes();
    if b.len() != 2 {
        return None;
    }
    square(b[0] as i8 - b'a' as i8, b[1] as i8 - b'1' as i8)
}

const KNIGHT: [(i8, i8); 8] = [
    (1, 2),
    (2, 1),
    (2, -1),
    (1, -2),
    (-1, -2),
    (-2, -1),
    (-2, 1),
    (-1, 2),
];
const KING: [(i8, i8); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
const ROOK_DIRS: [(i8, i8); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const BISHOP_DIRS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

const WHITE_KINGSIDE: u8 = 1;
const WHITE_QUEENSIDE: u8 = 2;
const BLACK_KINGSIDE: u8 = 4;
const BLACK_QUEENSIDE: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PlannedMove {
    from: Square,
    to: Square,
    promotion: Option<Kind>,
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Board {
    squares: Vec<Option<Piece>>,
    side: Color,
    castling: u8,
    en_passant: Option<Square>,
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Board({})", self.fen())
    }
}

impl Default for Board {
    fn default() -> Self {
        Board::start()
    }
}

impl Board {
    pub fn start() -> Self {
        Board::from_fen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1")
            .expect("start position")
    }

    /// Reads the first four FEN fields; clocks are ignored.
    pub fn from_fen(fen: &str) -> Result<Self, ChessError> {
        let bad = || ChessError::Fen(fen.to_string());
        let fields: Vec<&str> = fen.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(bad());
        }
        let mut squares = vec![None; 64];
        let ranks: Vec<&str> = fields[0].split('/').collect();
        if ranks.len() != 8 {
            return Err(bad());
        }
        for (i, row) in ranks.iter().enumerate() {
            let rank = 7 - i as i8;
            let mut file = 0i8;
            for c in row.chars() {
                if let Some(d) = c.to_digit(10) {
                    file += d as i8;
                } else {
                    let kind = Kind::from_letter(c).ok_or_else(bad)?;
                    let color = if c.is_ascii_uppercase() {
                        Color::White
                    } else {
                        Color::Black
                    };
                    let sq = square(file, rank).ok_or_else(bad)?;
                    squares[sq as usize] = Some(Piece { color, kind });
                    file += 1;
                }
            }
            if file != 8 {
                return Err(bad());
            }
        }
        let side = match fields[1] {
            "w" => Color::White,
            "b" => Color::Black,
            _ => return Err(bad()),
        };
        let mut castling = 0;
        for c in fields[2].chars() {
            castling |= match c {
                'K' => WHITE_KINGSIDE,
                'Q' => WHITE_QUEENSIDE,
                'k' => BLACK_KINGSIDE,
                'q' => BLACK_QUEENSIDE,
                '-' => 0,
                _ => return Err(bad()),
            };
        }
        let en_passant = match fields[3] {
            "-" => None,
            s => Some(parse_square(s).ok_or_else(bad)?),
        };
        let board = Board {
            squares,
            side,
            castling,
            en_passant,
        };
        for color in [Color::White, Color::Black] {
            let kings = board
                .pieces(color)
                .filter(|(_, p)| p.kind == Kind::King)
                .count();
            if kings != 1 {
                return Err(bad());
            }
        }
        Ok(board)
    }

    /// Piece placement field of the FEN.
    pub fn board_fen(&self) -> String {
        let mut out = String::new();
        for rank in (0..8).rev() {
            let mut empty = 0;
            for file in 0..8 {
                match self.squares[(rank * 8 + file) as usize] {
                    None => empty += 1,
                    Some(p) => {
                        if empty > 0 {
                            out.push_str(&empty.to_string());
                            empty = 0;
                        }
                        out.push(p.fen_char());
                    }
                }
            }
            if empty > 0 {
                out.push_str(&empty.to_string());
            }
            if rank > 0 {
                out.push('/');
            }
        }
        out
    }

    pub fn fen(&self) -> String {
        let mut rights = String::new();
        for (bit, c) in [
            (WHITE_KINGSIDE, 'K'),
            (WHITE_QUEENSIDE, 'Q'),
            (BLACK_KINGSIDE, 'k'),
            (BLACK_QUEENSIDE, 'q'),
        ] {
            if self.castling & bit != 0 {
                rights.push(c);
            }
        }
        if rights.is_empty() {
            rights.push('-');
        }
        let ep = self
            .en_passant
            .map(square_name)
            .unwrap_or_else(|| "-".into());
        let side = if self.side == Color::White { 'w' } else { 'b' };
        format!("{} {side} {rights} {ep}", self.board_fen())
    }

    pub fn side_to_move(&self) -> Color {
        self.side
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        self.squares[sq as usize]
    }

    pub fn piece_count(&self) -> usize {
        self.squares.iter().flatten().count()
    }

    fn pieces(&self, color: Color) -> impl Iterator<Item = (Square, Piece)> + '_ {
        self.squares
            .iter()
            .enumerate()
            .filter_map(move |(i, p)| p.filter(|p| p.color == color).map(|p| (i as Square, p)))
    }

    fn king(&self, color: Color) -> Square {
        self.pieces(color)
            .find(|(_, p)| p.kind == Kind::King)
            .map(|(s, _)| s)
            .expect("one king per side")
    }

    /// Whether any piece of `by` attacks `sq`.
    pub fn attacked(&self, sq: Square, by: Color) -> bool {
        let (f, r) = (file_of(sq), rank_of(sq));
        let is = |s: Option<Square>, kinds: &[Kind]| {
            s.and_then(|s| self.squares[s as usize])
                .is_some_and(|p| p.color == by && kinds.contains(&p.kind))
        };
        let back = -by.forward();
        if is(square(f - 1, r + back), &[Kind::Pawn]) || is(square(f + 1, r + back), &[Kind::Pawn])
        {
            return true;
        }
        if KNIGHT
            .iter()
            .any(|&(df, dr)| is(square(f + df, r + dr), &[Kind::Knight]))
        {
            return true;
        }
        if KING
            .iter()
            .any(|&(df, dr)| is(square(f + df, r + dr), &[Kind::King]))
        {
            return true;
        }
        let ray = |dirs: &[(i8, i8)], kinds: &[Kind]| {
            dirs.iter().any(|&(df, dr)| {
                let (mut x, mut y) = (f + df, r + dr);
                while let Some(s) = square(x, y) {
                    if let Some(p) = self.squares[s as usize] {
                        return p.color == by && kinds.contains(&p.kind);
                    }
                    x += df;
                    y += dr;
                }
                false
            })
        };
        ray(&ROOK_DIRS, &[Kind::Rook, Kind::Queen])
            || ray(&BISHOP_DIRS, &[Kind::Bishop, Kind::Queen])
    }

    pub fn in_check(&self) -> bool {
        self.attacked(self.king(self.side), self.side.other())
    }

    fn clear_path(&self, from: Square, to: Square) -> bool {
        let (df, dr) = (file_of(to) - file_of(from), rank_of(to) - rank_of(from));
        let (sf, sr) = (df.signum(), dr.signum());
        let (mut x, mut y) = (file_of(from) + sf, rank_of(from) + sr);
        while (x, y) != (file_of(to), rank_of(to)) {
            if self.squares[square(x, y).expect("on board") as usize].is_some() {
                return false;
            }
            x += sf;
            y += sr;
        }
        true
    }

    /// Whether the piece on `from` could move to `to` ignoring checks.
    fn reaches(&self, from: Square, to: Square) -> bool {
        let Some(piece) = self.squares[from as usize] else {
            return false;
        };
        if from == to || self.squares[to as usize].is_some_and(|p| p.color == piece.color) {
            return false;
        }
        let (df, dr) = (file_of(to) - file_of(from), rank_of(to) - rank_of(from));
        match piece.kind {
            Kind::Knight => KNIGHT.contains(&(df, dr)),
            Kind::King => df.abs() <= 1 && dr.abs() <= 1,
            Kind::Rook => (df == 0 || dr == 0) && self.clear_path(from, to),
            Kind::Bishop => df.abs() == dr.abs() && self.clear_path(from, to),
            Kind::Queen => {
                (df == 0 || dr == 0 || df.abs() == dr.abs()) && self.clear_path(from, to)
            }
            Kind::Pawn => {
                let fwd = piece.color.forward();
                let target = self.squares[to as usize];
                if df == 0 && target.is_none() {
                    dr == fwd
                        || (dr == 2 * fwd
                            && rank_of(from) == piece.color.home_rank() + fwd
                            && self.squares[square(file_of(from), rank_of(from) + fwd)
                                .expect("on board")
                                as usize]
                                .is_none())
                } else {
                    df.abs() == 1 && dr == fwd && (target.is_some() || self.en_passant == Some(to))
                }
            }
        }
    }

    fn castle_move(&self, long: bool) -> Option<PlannedMove> {
        let color = self.side;
        let rank = color.home_rank();
        let right = match (color, long) {
            (Color::White, false) => WHITE_KINGSIDE,
            (Color::White, true) => WHITE_QUEENSIDE,
            (Color::Black, false) => BLACK_KINGSIDE,
            (Color::Black, true) => BLACK_QUEENSIDE,
        };
        let king = square(4, rank)?;
        let rook = square(if long { 0 } else { 7 }, rank)?;
        if self.castling & right == 0
            || self.squares[king as usize]
                != Some(Piece {
                    color,
                    kind: Kind::King,
                })
            || self.squares[rook as usize]
                != Some(Piece {
                    color,
                    kind: Kind::Rook,
                })
            || !self.clear_path(king, rook)
        {
            return None;
        }
        let step: i8 = if long { -1 } else { 1 };
        let enemy = color.other();
        if (0..3).any(|k| self.attacked(square(4 + step * k, rank).expect("on board"), enemy)) {
            return None;
        }
        Some(PlannedMove {
            from: king,
            to: square(4 + 2 * step, rank)?,
            promotion: None,
        })
    }

    fn play(&self, mv: PlannedMove) -> (Board, MoveKind) {
        let mut next = self.clone();
        let piece = self.squares[mv.from as usize].expect("piece on origin");
        let captured = self.squares[mv.to as usize];
        let mut kind = if captured.is_some() {
            MoveKind::Capture
        } else {
            MoveKind::Simple
        };
        next.squares[mv.from as usize] = None;
        next.squares[mv.to as usize] = Some(match mv.promotion {
            Some(k) => Piece {
                color: piece.color,
                kind: k,
            },
            None => piece,
        });
        if mv.promotion.is_some() {
            kind = if captured.is_some() {
                MoveKind::PromotionCapture
            } else {
                MoveKind::Promotion
            };
        }
        if piece.kind == Kind::Pawn
            && Some(mv.to) == self.en_passant
            && captured.is_none()
            && file_of(mv.to) != file_of(mv.from)
        {
            let victim = square(file_of(mv.to), rank_of(mv.from)).expect("on board");
            next.squares[victim as usize] = None;
            kind = MoveKind::EnPassant;
        }
        if piece.kind == Kind::King && (file_of(mv.to) - file_of(mv.from)).abs() == 2 {
            let rank = rank_of(mv.from);
            let (rook_from, rook_to) = if file_of(mv.to) == 6 { (7, 5) } else { (0, 3) };
            let rf = square(rook_from, rank).expect("on board");
            next.squares[square(rook_to, rank).expect("on board") as usize] =
                next.squares[rf as usize].take();
            kind = MoveKind::Castling;
        }
        next.en_passant = None;
        if piece.kind == Kind::Pawn && (rank_of(mv.to) - rank_of(mv.from)).abs() == 2 {
            next.en_passant = square(file_of(mv.from), rank_of(mv.from) + piece.color.forward());
        }
        if piece.kind == Kind::King {
            next.castling &= match piece.color {
                Color::White => !(WHITE_KINGSIDE | WHITE_QUEENSIDE),
                Color::Black => !(BLACK_KINGSIDE | BLACK_QUEENSIDE),
            };
        }
        for (sq, bit) in [
            (0, WHITE_QUEENSIDE),
            (7, WHITE_KINGSIDE),
            (56, BLACK_QUEENSIDE),
            (63, BLACK_KINGSIDE),
        ] {
            if mv.from == sq || mv.to == sq {
                next.castling &= !bit;
            }
        }
        next.side = self.side.other();
        (next, kind)
    }

    fn legal(&self, mv: PlannedMove) -> Option<(Board, MoveKind)> {
        let (next, kind) = self.play(mv);
        (!next.attacked(next.king(self.side), self.side.other())).then_some((next, kind))
    }

    /// Plays one move given in standard algebraic notation.
    pub fn apply_san(&self, san: &str) -> Result<(Board, MoveKind), ChessError> {
        let text = san.trim_end_matches(['+', '#', '!', '?']);
        if matches!(text, "O-O" | "0-0" | "O-O-O" | "0-0-0") {
            let long = text.len() == 5;
            return self
                .castle_move(long)
                .and_then(|mv| self.legal(mv))
                .ok_or_else(|| ChessError::Illegal(san.into()));
        }
        let notation = || ChessError::Notation(san.into());
        let (body, promotion) = match text.split_once('=') {
            Some((body, p)) => {
                let mut cs = p.chars();
                let k = cs.next().and_then(Kind::from_letter).ok_or_else(notation)?;
                if cs.next().is_some() {
                    return Err(notation());
                }
                (body, Some(k))
            }
            None => match text.chars().last() {
                Some(c @ ('Q' | 'R' | 'B' | 'N'))
                    if text.len() > 2 && text.as_bytes()[0].is_ascii_lowercase() =>
                {
                    (&text[..text.len() - 1], Kind::from_letter(c))
                }
                _ => (text, None),
            },
        };
        let (kind, rest) = match body.chars().next() {
            Some(c @ ('K' | 'Q' | 'R' | 'B' | 'N')) => {
                (Kind::from_letter(c).expect("piece letter"), &body[1..])
            }
            Some('a'..='h') => (Kind::Pawn, body),
            _ => return Err(notation()),
        };
        if rest.len() < 2 || !rest.is_ascii() {
            return Err(notation());
        }
        let to = parse_square(&rest[rest.len() - 2..]).ok_or_else(notation)?;
        let mut from_file = None;
        let mut from_rank = None;
        for c in rest[..rest.len() - 2].chars() {
            match c {
                'a'..='h' if from_file.is_none() => from_file = Some(c as i8 - 'a' as i8),
                '1'..='8' if from_rank.is_none() => from_rank = Some(c as i8 - '1' as i8),
                'x' | '-' => {}
                _ => return Err(notation()),
            }
        }
        if (kind == Kind::Pawn) != promotion.is_some() && kind == Kind::Pawn {
            let last = if self.side == Color::White { 7 } else { 0 };
            if rank_of(to) == last {
                return Err(ChessError::Illegal(format!(
                    "{san} (promotion piece missing)"
                )));
            }
        }
        if promotion.is_some()
            && (kind != Kind::Pawn
                || promotion == Some(Kind::King)
                || promotion == Some(Kind::Pawn))
        {
            return Err(notation());
        }
        let mut found = Vec::new();
        for (from, p) in self.pieces(self.side) {
            if p.kind != kind
                || from_file.is_some_and(|f| f != file_of(from))
                || from_rank.is_some_and(|r| r != rank_of(from))
                || !self.reaches(from, to)
            {
                continue;
            }
            let mv = PlannedMove {
                from,
                to,
                promotion,
            };
            if let Some(result) = self.legal(mv) {
                found.push((from, result));
            }
        }
        match found.len() {
            0 => Err(ChessError::Illegal(san.into())),
            1 => Ok(found.pop().expect("one candidate").1),
            _ => Err(ChessError::Ambiguous {
                san: san.into(),
                candidates: found
                    .iter()
                    .map(|(from, _)| {
                        format!(
                            "{}{}-{}",
                            kind.letter(),
                            square_name(*from),
                            square_name(to)
                        )
                    })
                    .collect(),
            }),
        }
    }

    /// Square symbols: piece index, or [`EMPTY`].
    pub fn symbols(&self) -> Vec<u8> {
        self.squares
            .iter()
            .map(|p| p.map_or(EMPTY, Piece::index))
            .collect()
    }

    pub fn state(&self) -> State {
        State::Symbols(self.symbols())
    }
}

/// FEN piece placement for 64 square symbols, `None` on a malformed vector.
pub fn placement_from_symbols(symbols: &[u8]) -> Option<String> {
    if symbols.len() != 64 {
        return None;
    }
    let mut out = String::new();
    for rank in (0..8).rev() {
        let mut empty = 0;
        for file in 0..8 {
            let s = symbols[rank * 8 + file];
            if s == EMPTY {
                empty += 1;
                continue;
            }
            if s > EMPTY {
                return None;
            }
            if empty > 0 {
                out.push(char::from_digit(empty, 10).expect("digit"));
                empty = 0;
            }
            let letter = "PNBRQKpnbrqk".as_bytes()[s as usize] as char;
            out.push(letter);
        }
        if empty > 0 {
            out.push(char::from_digit(empty, 10).expect("digit"));
        }
        if rank > 0 {
            out.push('/');
        }
    }
    Some(out)
}

pub fn encoding() -> Encoding {
    Encoding::OneHot {
        length: 64,
        categories: 13,
        blank: Some(EMPTY),
    }
}

/// 64 squares x 13 slots; an empty square is an all-zero slot.
pub fn encode_board(board: &Board) -> Vec<f64> {
    encoding().encode(&board.state())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameResult {
    White,
    Black,
    Draw,
    Unknown,
}

impl GameResult {
    fn parse(token: &str) -> Option<GameResult> {
        Some(match token {
            "1-0" => GameResult::White,
            "0-1" => GameResult::Black,
            "1/2-1/2" => GameResult::Draw,
            "*" => GameResult::Unknown,
            _ => return None,
        })
    }

    pub fn token(self) -> &'static str {
        match self {
            GameResult::White => "1-0",
            GameResult::Black => "0-1",
            GameResult::Draw => "1/2-1/2",
            GameResult::Unknown => "*",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub headers: BTreeMap<String, String>,
    pub moves: Vec<String>,
    pub result: GameResult,
}

impl GameRecord {
    pub fn rating(&self, color: Color) -> Option<i64> {
        let key = if color == Color::White {
            "WhiteElo"
        } else {
            "BlackElo"
        };
        self.headers.get(key)?.trim().parse().ok()
    }

    /// White's first move without check or annotation marks.
    pub fn opening(&self) -> Option<&str> {
        self.moves
            .first()
            .map(|m| m.trim_end_matches(['+', '#', '!', '?']))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgnDiagnostic {
    /// Zero-based index of the game in the input.
    pub game: usize,
    /// Byte offset into the input.
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PgnParse {
    pub games: Vec<GameRecord>,
    /// Games that failed are skipped; each failure is listed here.
    pub diagnostics: Vec<PgnDiagnostic>,
}

struct PendingGame {
    headers: BTreeMap<String, String>,
    moves: Vec<String>,
    board: Board,
    failed: bool,
    started: bool,
}

impl PendingGame {
    fn new() -> Self {
        PendingGame {
            headers: BTreeMap::new(),
            moves: Vec::new(),
            board: Board::start(),
            failed: false,
            started: false,
        }
    }
}

fn parse_tag(bytes: &[u8], start: usize) -> Result<(String, String, usize), String> {
    let mut i = start + 1;
    let skip_ws = |i: &mut usize| {
        while *i < bytes.len() && (bytes[*i] == b' ' || bytes[*i] == b'\t') {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    let name_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
        i += 1;
    }
    if i == name_start {
        return Err("tag pair without a name".into());
    }
    let name = String::from_utf8_lossy(&bytes[name_start..i]).into_owned();
    skip_ws(&mut i);
    if bytes.get(i) != Some(&b'"') {
        return Err(format!("tag '{name}' has no quoted value"));
    }
    i += 1;
    let mut value = Vec::new();
    loop {
        match bytes.get(i) {
            None | Some(b'\n') => return Err(format!("tag '{name}' value is not closed")),
            Some(b'\\') if matches!(bytes.get(i + 1), Some(b'"') | Some(b'\\')) => {
                value.push(bytes[i + 1]);
                i += 2;
            }
            Some(b'"') => {
                i += 1;
                break;
            }
            Some(&b) => {
                value.push(b);
                i += 1;
            }
        }
    }
    skip_ws(&mut i);
    if bytes.get(i) != Some(&b']') {
        return Err(format!("tag '{name}' is not closed by ']'"));
    }
    Ok((name, String::from_utf8_lossy(&value).into_owned(), i + 1))
}

fn is_move_number(token: &str) -> Option<&str> {
    let digits = token.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &token[digits..];
    let dots = rest.bytes().take_while(|&b| b == b'.').count();
    if dots == 0 && !rest.is_empty() {
        return None;
    }
    Some(&rest[dots..])
}

/// Reads every game of a PGN text. Comments, annotation glyphs and
/// variations are skipped; each move is replayed so illegal moves are caught
/// here. A game with an error is dropped and reading continues with the next.
pub fn parse_pgn(text: &str) -> PgnParse {
    let bytes = text.as_bytes();
    let mut out = PgnParse::default();
    let mut game = PendingGame::new();
    let mut index = 0usize;
    let finish = |game: &mut PendingGame,
                  out: &mut PgnParse,
                  index: &mut usize,
                  result: Option<GameResult>| {
        if !game.started {
            return;
        }
        if !game.failed {
            let result = result
                .or_else(|| {
                    game.headers
                        .get("Result")
                        .and_then(|r| GameResult::parse(r))
                })
                .unwrap_or(GameResult::Unknown);
            out.games.push(GameRecord {
                headers: std::mem::take(&mut game.headers),
                moves: std::mem::take(&mut game.moves),
                result,
            });
        }
        *game = PendingGame::new();
        *index += 1;
    };
    let fail = |game: &mut PendingGame,
                out: &mut PgnParse,
                index: usize,
                offset: usize,
                message: String| {
        if !game.failed {
            out.diagnostics.push(PgnDiagnostic {
                game: index,
                offset,
                message,
            });
            game.failed = true;
        }
    };
    let mut i = 0;
    let mut line_start = true;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let at_line_start = std::mem::replace(&mut line_start, false);
        match b {
            b'%' if at_line_start => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'[' => {
                if game.started
                    && (!game.moves.is_empty() || game.failed && game.headers.is_empty())
                {
                    finish(&mut game, &mut out, &mut index, None);
                }
                game.started = true;
                match parse_tag(bytes, i) {
                    Ok((name, value, end)) => {
                        game.headers.insert(name, value);
                        i = end;
                    }
                    Err(message) => {
                        fail(&mut game, &mut out, index, i, message);
                        while i < bytes.len() && bytes[i] != b'\n' {
                            i += 1;
                        }
                    }
                }
            }
            b'{' => match text[i..].find('}') {
                Some(end) => i += end + 1,
                None => {
                    game.started = true;
                    fail(
                        &mut game,
                        &mut out,
                        index,
                        i,
                        "comment is not closed".into(),
                    );
                    i = bytes.len();
                }
            },
            b';' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                let start = i;
                let mut depth = 0usize;
                while i < bytes.len() {
                    match bytes[i] {
                        b'(' => depth += 1,
                        b')' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        b'{' => match text[i..].find('}') {
                            Some(end) => i += end,
                            None => i = bytes.len() - 1,
                        },
                        _ => {}
                    }
                    i += 1;
                }
                if depth > 0 {
                    fail(
                        &mut game,
                        &mut out,
                        index,
                        start,
                        "variation is not closed".into(),
                    );
                }
                i += 1;
            }
            b')' | b']' | b'}' => {
                game.started = true;
                fail(
                    &mut game,
                    &mut out,
                    index,
                    i,
                    format!("unexpected '{}'", b as char),
                );
                i += 1;
            }
            b'$' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && !b"{}()[];$".contains(&bytes[i])
                {
                    i += 1;
                }
                let token = &text[start..i];
                game.started = true;
                if let Some(result) = GameResult::parse(token) {
                    finish(&mut game, &mut out, &mut index, Some(result));
                    continue;
                }
                let (san, offset) = match is_move_number(token) {
                    Some("") => continue,
                    Some(rest) => (rest, start + token.len() - rest.len()),
                    None => (token, start),
                };
                let san = san.trim_end_matches(['!', '?']);
                if game.failed || san.is_empty() {
                    continue;
                }
                match game.board.apply_san(san) {
                    Ok((next, _)) => {
                        game.board = next;
                        game.moves.push(san.to_string());
                    }
                    Err(e) => {
                        let message = format!("move {}: {e}", game.moves.len() + 1);
                        fail(&mut game, &mut out, index, offset, message);
                    }
                }
            }
        }
    }
    finish(&mut game, &mut out, &mut index, None);
    out
}

/// Start position plus the board after every half-move.
pub fn game_trace(record: &GameRecord, id: &str) -> Result<Trajectory, ChessError> {
    let mut labels = Metadata::new();
    if let Some(o) = record.opening() {
        labels.insert("opening".into(), MetaValue::Text(o.to_string()));
    }
    labels.insert("result".into(), record.result.token().into());
    for (key, color) in [("white_elo", Color::White), ("black_elo", Color::Black)] {
        if let Some(r) = record.rating(color) {
            labels.insert(key.into(), MetaValue::Number(r as f64));
        }
    }
    for (key, header) in [("white", "White"), ("black", "Black"), ("event", "Event")] {
        if let Some(v) = record.headers.get(header) {
            labels.insert(key.into(), MetaValue::Text(v.clone()));
        }
    }
    let mut board = Board::start();
    let mut states = Vec::with_capacity(record.moves.len() + 1);
    let mut meta = Metadata::new();
    meta.insert("half_move".into(), 0usize.into());
    meta.insert("kind".into(), "start".into());
    states.push((board.state(), meta));
    for (k, san) in record.moves.iter().enumerate() {
        let side = board.side_to_move();
        let (next, kind) = board.apply_san(san).map_err(|e| ChessError::AtHalfMove {
            index: k + 1,
            source: Box::new(e),
        })?;
        board = next;
        let mut meta = Metadata::new();
        meta.insert("half_move".into(), (k + 1).into());
        meta.insert("kind".into(), kind.name().into());
        meta.insert("side".into(), side.name().into());
        meta.insert("san".into(), MetaValue::Text(san.clone()));
        states.push((board.state(), meta));
    }
    Ok(Trajectory::from_states(id, labels, states))
}

/// Move kinds of every half-move, in order.
pub fn move_kinds(record: &GameRecord) -> Result<Vec<MoveKind>, ChessError> {
    let mut board = Board::start();
    let mut out = Vec::with_capacity(record.moves.len());
    for (k, san) in record.moves.iter().enumerate() {
        let (next, kind) = board.apply_san(san).map_err(|e| ChessError::AtHalfMove {
            index: k + 1,
            source: Box::new(e),
        })?;
        board = next;
        out.push(kind);
    }
    Ok(out)
}

/// Games where both players are rated above `min_rating` and white opened
/// with one of `openings` (any opening when the list is empty).
pub fn filter_games(
    records: &[GameRecord],
    min_rating: i64,
    openings: &[String],
) -> Vec<GameRecord> {
    records
        .iter()
        .filter(|g| {
            let rated = [Color::White, Color::Black]
                .iter()
                .all(|&c| g.rating(c).is_some_and(|r| r > min_rating));
            let opened =
                openings.is_empty() || g.opening().is_some_and(|o| openings.iter().any(|x| x == o));
            rated && opened
        })
        .cloned()
        .collect()
}

/// One trajectory per game with at least one move, ids `game-0000` onward.
pub fn chess_dataset(records: &[GameRecord]) -> Result<StateDataset, ChessError> {
    let mut trajectories = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.moves.is_empty() {
            continue;
        }
        trajectories.push(game_trace(r, &format!("game-{i:04}"))?);
    }
    Ok(StateDataset::build("chess", encoding(), trajectories)?)
}
