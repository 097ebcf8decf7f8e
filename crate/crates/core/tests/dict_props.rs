use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use qdict::seed::stream;
use qdict::{Error, MembPhDict, MembPhParams, PerfectHashing, PhOnlyDict, PhOnlyParams};

#[derive(Clone, Debug)]
enum Op {
    Insert(u64),
    Delete(usize),
}

fn ops(u_bits: u32) -> impl Strategy<Value = Vec<Op>> {
    let key = 0u64..(1u64 << u_bits);
    proptest::collection::vec(
        prop_oneof![3 => key.prop_map(Op::Insert), 2 => any::<usize>().prop_map(Op::Delete)],
        0..600,
    )
}

/// Replays `ops`, checking code range, distinctness and stability; returns the live codes.
fn replay<E: PerfectHashing>(
    d: &mut E,
    ops: &[Op],
) -> std::result::Result<HashMap<u64, u64>, TestCaseError> {
    let mut live: HashMap<u64, u64> = HashMap::new();
    let mut order: Vec<u64> = Vec::new();
    let bits = d.space().total();
    for op in ops {
        match *op {
            Op::Insert(x) => {
                if live.contains_key(&x) || live.len() as u64 == d.capacity() {
                    continue;
                }
                let code = d.insert(x)?;
                prop_assert!(code < d.range());
                prop_assert!(!live.values().any(|&c| c == code));
                live.insert(x, code);
                order.push(x);
            }
            Op::Delete(i) => {
                if order.is_empty() {
                    continue;
                }
                let x = order.swap_remove(i % order.len());
                prop_assert_eq!(d.delete(x)?, live.remove(&x).unwrap());
            }
        }
        prop_assert_eq!(d.len(), live.len() as u64);
    }
    for (&x, &c) in &live {
        prop_assert_eq!(d.code_of(x)?, c);
    }
    let distinct: HashSet<u64> = live.values().copied().collect();
    prop_assert_eq!(distinct.len(), live.len());
    prop_assert_eq!(d.space().total(), bits, "space changed with occupancy");
    Ok(live)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn memb_ph_contract(n_bits in 4u32..=9, t_sel in 0u32..3, u_bits in 12u32..=40,
                        seed in any::<u64>(), ops in ops(12)) {
        let n = 1u64 << n_bits;
        let t = [0, 8, n][t_sel as usize];
        let mut d = MembPhDict::new(MembPhParams::new(n, t, u_bits), &mut stream(seed))?;
        let live = replay(&mut d, &ops)?;
        for x in 0..64u64 {
            prop_assert_eq!(d.member(x), live.contains_key(&x));
            if !live.contains_key(&x) {
                prop_assert!(matches!(d.hashcode(x), Err(Error::NotResident(_))));
            }
        }
    }

    #[test]
    fn ph_only_contract(n_bits in 4u32..=9, t_sel in 0u32..3, u_bits in 12u32..=40,
                        seed in any::<u64>(), ops in ops(12)) {
        let n = 1u64 << n_bits;
        let t = [0, 8, n][t_sel as usize];
        let mut d = PhOnlyDict::new(PhOnlyParams::new(n, t, u_bits), &mut stream(seed))?;
        match replay(&mut d, &ops) {
            Ok(_) => {}
            // Second-structure overflow is reported, never silently absorbed.
            Err(e) if e.to_string().contains("collision structure full") => {}
            Err(e) => return Err(e),
        }
    }
}
