use serde::Deserialize;
use trajspace_core::{Metric, PairwiseDistances};
use trajspace_domains::chess::{
    chess_dataset, encode_board, filter_games, game_trace, move_kinds, parse_pgn, Board, MoveKind,
};

const PGN: &str = include_str!("fixtures/games.pgn");
const EXPECTED: &str = include_str!("fixtures/games.json");

#[derive(Deserialize)]
struct Expected {
    r#final: String,
    kinds: Vec<String>,
    result: String,
}

fn expected() -> Vec<Expected> {
    serde_json::from_str(EXPECTED).unwrap()
}

#[test]
fn every_fixture_game_parses() {
    let parsed = parse_pgn(PGN);
    assert!(
        parsed.diagnostics.is_empty(),
        "{:?}",
        &parsed.diagnostics[..1]
    );
    let want = expected();
    assert_eq!(parsed.games.len(), want.len());
    for (g, e) in parsed.games.iter().zip(&want) {
        assert_eq!(g.result.token(), e.result);
        assert_eq!(g.moves.len(), e.kinds.len());
    }
}

#[test]
fn final_boards_match_oracle_replay() {
    let parsed = parse_pgn(PGN);
    for (i, (g, e)) in parsed.games.iter().zip(expected()).enumerate() {
        let mut board = Board::start();
        for san in &g.moves {
            board = board.apply_san(san).unwrap().0;
        }
        assert_eq!(board.board_fen(), e.r#final, "game {i}");
        let kinds: Vec<&str> = move_kinds(g).unwrap().iter().map(|k| k.name()).collect();
        assert_eq!(kinds, e.kinds, "game {i}");
    }
}

#[test]
fn consecutive_distances_follow_move_kind() {
    let games = parse_pgn(PGN).games;
    let ds = chess_dataset(&games).unwrap();
    let d = PairwiseDistances::new(&ds, Metric::Euclidean).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for (t, g) in games.iter().enumerate() {
        let kinds = move_kinds(g).unwrap();
        for (k, kind) in kinds.iter().enumerate() {
            let (a, b) = (ds.global_index(t, k), ds.global_index(t, k + 1));
            let want = match kind {
                MoveKind::Simple | MoveKind::Promotion => 2f64.sqrt(),
                MoveKind::Castling => 2.0,
                _ => 3f64.sqrt(),
            };
            assert!(
                (d.get(a, b) - want).abs() < 1e-9,
                "game {t} half-move {}",
                k + 1
            );
            let changed = encode_board_pair_bits(&ds, a, b);
            assert_eq!((changed as f64).sqrt(), kind.distance());
            seen.insert(*kind);
        }
    }
    assert_eq!(seen.len(), 6);
}

fn encode_board_pair_bits(ds: &trajspace_core::StateDataset, a: usize, b: usize) -> usize {
    let (x, y) = (ds.encoded(a).unwrap(), ds.encoded(b).unwrap());
    x.iter().zip(&y).filter(|(p, q)| p != q).count()
}

#[test]
fn replay_is_deterministic() {
    let a = parse_pgn(PGN).games;
    let b = parse_pgn(PGN).games;
    for (x, y) in a.iter().zip(&b).take(20) {
        let tx = game_trace(x, "x").unwrap();
        let ty = game_trace(y, "y").unwrap();
        for (p, q) in tx.points.iter().zip(&ty.points) {
            assert_eq!(p.state, q.state);
        }
    }
    assert_eq!(encode_board(&Board::start()).iter().sum::<f64>(), 32.0);
}

#[test]
fn filter_keeps_two_opening_classes() {
    let games = parse_pgn(PGN).games;
    let kept = filter_games(&games, 2000, &["d3".into(), "Nf3".into()]);
    assert!(kept.len() >= 200, "{}", kept.len());
    let openings: std::collections::BTreeSet<&str> =
        kept.iter().filter_map(|g| g.opening()).collect();
    assert_eq!(openings.into_iter().collect::<Vec<_>>(), vec!["Nf3", "d3"]);
}
