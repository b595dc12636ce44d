use chaoscrack::cipher::{cat_map_matrix, chen_derivative, keystream, CipherKey};

#[test]
fn static_keystream_prefix_matches_oracle_fixture() {
    let golden = include_str!("fixtures/keystream_static_prefix.hex").trim();
    let ks = keystream(&CipherKey::reference(), 128).unwrap();
    assert_eq!(hex::encode(&ks.as_bytes()[..16]), golden);
}

#[test]
fn known_matrices_mod_8() {
    assert_eq!(cat_map_matrix(4, 7, 1, 8).entries(), [1, 4, 7, 5]);
    assert_eq!(cat_map_matrix(4, 7, 2, 8).entries(), [5, 0, 2, 5]);
}

#[test]
fn known_coordinate_move() {
    let m = cat_map_matrix(4, 7, 1, 8);
    assert_eq!(m.apply(1, 1), (5, 4));
}

#[test]
fn vector_field_at_reference_state() {
    let key = CipherKey::reference();
    let d = chen_derivative(&key.initial_state(), &key.chen_params());
    assert!((d.x - 364.91).abs() < 1e-9);
}
