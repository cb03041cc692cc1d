mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use bagchain_core::chain::{main_chain, EnsembleBlock, KeyBlock, MiniBlock, PayloadKind};
use bagchain_core::codec::{Decode, Encode};
use bagchain_core::consensus::{
    assemble_keyblock, ensemble_metric, generate_ensembleblock, generate_miniblock, prehash_vote, select_miniblocks,
    try_nonces, Candidate, FetchItem, FetchReply, Message, Outgoing, Rejection, Strategy, Verdict,
};
use bagchain_core::ml::{Accuracy, DecisionTree, TrainedModel};
use bagchain_core::netsim::{Envelope, Topology};
use bagchain_core::world::World;
use bagchain_core::{HashDigest, NodeId, Target};

use common::{models_by_digest, run_until, t1, trained, Setup};

/// Every logged block as extra context for an observer.
fn everything(w: &World) -> Vec<Message> {
    let log = w.log();
    let mut out: Vec<Message> = log
        .miniblocks
        .iter()
        .map(|(_, mb, _)| Message::MiniBlock(mb.clone()))
        .collect();
    out.extend(log.ensembles.iter().map(|(_, eb)| Message::Ensemble(eb.clone())));
    out.extend(log.keyblocks.iter().map(|(_, kb)| Message::Key(kb.clone())));
    out
}

fn target() -> Target {
    Target::pow2_minus_one(250)
}

fn remine(kb: &mut KeyBlock) {
    assert!(try_nonces(kb, &target(), kb.timestamp, 0, 1_000_000));
}

fn ensembles(w: &World) -> BTreeMap<HashDigest, Arc<EnsembleBlock>> {
    w.log()
        .ensembles
        .iter()
        .map(|(_, eb)| (eb.digest(), eb.clone()))
        .collect()
}

fn miniblocks(w: &World) -> BTreeMap<HashDigest, Arc<MiniBlock>> {
    w.log()
        .miniblocks
        .iter()
        .map(|(_, mb, _)| (mb.digest(), mb.clone()))
        .collect()
}

#[test]
fn honest_blocks_pass_an_observers_checks() {
    for cfs in [false, true] {
        let mut w = Setup::honest(5, cfs, 11).build();
        run_until(&mut w, 4);
        let observer = &w.miners()[0];
        let top = observer.tip_height();
        let extra = everything(&w);
        let models = models_by_digest(&w);
        let mut checked = 0;
        for (mb, _) in trained(&w) {
            if mb.height <= top && t1(&w, mb.height).is_some_and(|t| mb.timestamp < t) {
                assert_eq!(
                    observer.judge(&Message::MiniBlock(mb.clone()), &extra, &models),
                    Verdict::Valid
                );
                checked += 1;
            }
        }
        for (_, eb) in &w.log().ensembles {
            if eb.height <= top {
                assert_eq!(
                    observer.judge(&Message::Ensemble(eb.clone()), &extra, &models),
                    Verdict::Valid
                );
                checked += 1;
            }
        }
        for (_, kb) in &w.log().keyblocks {
            if kb.height <= top {
                assert_eq!(
                    observer.judge(&Message::Key(kb.clone()), &extra, &models),
                    Verdict::Valid
                );
                checked += 1;
            }
        }
        assert!(checked > 20, "only {checked} blocks checked");
    }
}

#[test]
fn forged_blocks_are_rejected_for_the_right_reason() {
    let mut w = Setup::honest(5, true, 3).build();
    run_until(&mut w, 4);
    let observer = &w.miners()[0];
    let extra = everything(&w);
    let models = models_by_digest(&w);
    let judge = |block: Message, models: &[(HashDigest, Arc<DecisionTree>)]| observer.judge(&block, &extra, models);

    let (mb, tree) = trained(&w).into_iter().find(|(mb, _)| mb.height == 2).unwrap();

    let mut bytes = tree.to_bytes();
    *bytes.last_mut().unwrap() ^= 1;
    let flipped = Arc::new(DecisionTree::from_bytes(&bytes).unwrap());
    assert_ne!(*flipped, *tree);
    assert_eq!(
        judge(Message::MiniBlock(mb.clone()), &[(mb.digest(), flipped)]),
        Verdict::Invalid(Rejection::OwnershipMismatch)
    );

    let thief = NodeId((mb.miner.0 + 1) % 5);
    let copied = Arc::new(MiniBlock {
        miner: thief,
        ..(*mb).clone()
    });
    assert_eq!(
        judge(Message::MiniBlock(copied.clone()), &[(copied.digest(), tree.clone())]),
        Verdict::Invalid(Rejection::OwnershipMismatch)
    );

    let late = Arc::new(MiniBlock {
        timestamp: t1(&w, 2).unwrap(),
        ..(*mb).clone()
    });
    assert_eq!(
        judge(Message::MiniBlock(late.clone()), &[(late.digest(), tree)]),
        Verdict::Invalid(Rejection::LateMiniBlock)
    );

    let (_, eb) = w.log().ensembles.iter().find(|(_, eb)| eb.height == 2).unwrap();
    let m = eb.metric_v;
    let bumped = if m.correct() < m.total() {
        m.correct() + 1
    } else {
        m.correct() - 1
    };
    let inflated = EnsembleBlock {
        metric_v: Accuracy::new(bumped, m.total()).unwrap(),
        ..(**eb).clone()
    };
    assert_eq!(
        judge(Message::Ensemble(Arc::new(inflated)), &models),
        Verdict::Invalid(Rejection::MetricVMismatch)
    );

    let chain = main_chain(observer.store());
    let kb = chain
        .iter()
        .find(|kb| kb.height >= 2 && !kb.eb_entries.is_empty())
        .unwrap();
    assert_eq!(judge(Message::Key(kb.clone()), &models), Verdict::Valid);

    let mut lowered = (**kb).clone();
    let best = lowered.metric_best;
    lowered.metric_best = Accuracy::new(best.correct().saturating_sub(1), best.total()).unwrap();
    assert_ne!(lowered.metric_best, best);
    remine(&mut lowered);
    assert_eq!(
        judge(Message::Key(Arc::new(lowered)), &models),
        Verdict::Invalid(Rejection::MetricBestMismatch)
    );

    let mut unlucky = (**kb).clone();
    while target().is_met_by(&unlucky.hash()) {
        unlucky.nonce += 1;
    }
    assert_eq!(
        judge(Message::Key(Arc::new(unlucky)), &models),
        Verdict::Invalid(Rejection::ProofOfWork)
    );

    let mut redirected = (**kb).clone();
    let share = redirected
        .payload
        .iter_mut()
        .find(|r| r.kind == PayloadKind::TrainingFeeShare)
        .unwrap();
    share.payee = NodeId(share.payee.0 + 100);
    redirected.seal_payload();
    remine(&mut redirected);
    assert_eq!(
        judge(Message::Key(Arc::new(redirected)), &models),
        Verdict::Invalid(Rejection::PayloadMismatch)
    );

    let mut resealed_only = (**kb).clone();
    resealed_only.payload[0].amount += 1;
    remine(&mut resealed_only);
    assert_eq!(
        judge(Message::Key(Arc::new(resealed_only)), &models),
        Verdict::Invalid(Rejection::MerkleRootMismatch)
    );
}

#[test]
fn constant_model_falls_below_the_floor() {
    let setup = Setup {
        metric_min: 0.5,
        ..Setup::honest(4, true, 5)
    };
    let mut w = setup.build();
    run_until(&mut w, 1);
    let observer = &w.miners()[0];
    let dv = &w.task_data()[0].validation;
    let constant = TrainedModel::new(
        DecisionTree::constant(dv.n_features() as u32, dv.n_classes(), 0),
        NodeId(1),
    );
    let task_id = *w.tasks().by_index(0).unwrap().0;
    let mb = generate_miniblock(&constant, task_id, 1, w.genesis().hash(), 0);
    let verdict = observer.judge(
        &Message::MiniBlock(Arc::new(mb.clone())),
        &[],
        &[(mb.digest(), Arc::new(constant.tree))],
    );
    assert_eq!(verdict, Verdict::Invalid(Rejection::Underperforming));
    let (honest, tree) = trained(&w).into_iter().find(|(mb, _)| mb.height == 1).unwrap();
    assert_eq!(
        observer.judge(&Message::MiniBlock(honest.clone()), &[], &[(honest.digest(), tree)]),
        Verdict::Valid
    );
}

/// An Ensemble Block over two MiniBlocks of one height on different parents:
/// one on the main chain and one on a forced sibling of its parent.
fn cross_fork_verdict(cfs: bool) -> Verdict {
    let mut w = Setup::honest(5, cfs, 17).build();
    run_until(&mut w, 4);
    let observer = &w.miners()[0];
    let chain = main_chain(observer.store());
    let (h, pair) = (2..chain.len())
        .find_map(|h| {
            let parent = chain[h - 1].hash();
            let t = t1(&w, h as u64)?;
            let early: Vec<_> = trained(&w)
                .into_iter()
                .filter(|(mb, _)| mb.height == h as u64 && mb.prehash == parent && mb.timestamp < t)
                .take(2)
                .collect();
            <[_; 2]>::try_from(early).ok().map(|pair| (h, pair))
        })
        .expect("a height with two timely MiniBlocks on the main chain");
    let [(a, ta), (b, tb)] = pair;
    let (grand, parent) = (&chain[h - 2], &chain[h - 1]);
    let task = w.tasks().get(&parent.task_id).unwrap();
    let mut sibling = assemble_keyblock(grand, grand.hash(), vec![], &[], task, w.tasks(), NodeId(4), 10).unwrap();
    sibling.timestamp = parent.timestamp;
    remine(&mut sibling);
    assert_ne!(sibling.hash(), parent.hash());

    let moved = Arc::new(MiniBlock {
        prehash: sibling.hash(),
        ..(*b).clone()
    });
    let dv = &w.task_data()[h - 1].validation;
    let metric_v = ensemble_metric(&[&ta, &tb], dv).unwrap();
    let mut refs = vec![a.digest(), moved.digest()];
    refs.sort();
    let eb = generate_ensembleblock(
        refs,
        metric_v,
        NodeId(0),
        a.task_id,
        h as u64,
        t1(&w, h as u64).unwrap(),
    );
    let extra = [
        Message::Key(Arc::new(sibling)),
        Message::MiniBlock(a.clone()),
        Message::MiniBlock(moved.clone()),
    ];
    observer.judge(
        &Message::Ensemble(Arc::new(eb)),
        &extra,
        &[(a.digest(), ta), (moved.digest(), tb)],
    )
}

#[test]
fn cross_fork_references_need_sharing() {
    assert_eq!(cross_fork_verdict(false), Verdict::Invalid(Rejection::PrehashMismatch));
    assert_eq!(cross_fork_verdict(true), Verdict::Valid);
}

#[test]
fn same_parameters_count_once() {
    for cfs in [false, true] {
        let mut w = Setup::honest(5, cfs, 23).build();
        run_until(&mut w, 3);
        let observer = &w.miners()[0];
        let (mb, tree) = trained(&w)
            .into_iter()
            .find(|(mb, _)| mb.height == 2 && mb.timestamp + 1 < t1(&w, 2).unwrap())
            .expect("an early height-2 MiniBlock");
        let twin = Arc::new(MiniBlock {
            timestamp: mb.timestamp + 1,
            ..(*mb).clone()
        });
        assert_ne!(twin.digest(), mb.digest());
        let dv = &w.task_data()[1].validation;
        let metric_v = ensemble_metric(&[&tree, &tree], dv).unwrap();
        let mut refs = vec![mb.digest(), twin.digest()];
        refs.sort();
        let eb = generate_ensembleblock(refs, metric_v, NodeId(0), mb.task_id, 2, mb.timestamp + 2);
        let verdict = observer.judge(
            &Message::Ensemble(Arc::new(eb)),
            &[Message::MiniBlock(mb.clone()), Message::MiniBlock(twin.clone())],
            &[(mb.digest(), tree.clone()), (twin.digest(), tree.clone())],
        );
        assert_eq!(verdict, Verdict::Invalid(Rejection::DuplicateModel), "cfs {cfs}");

        let params = HashDigest::of(&tree.to_bytes());
        let candidates = [
            Candidate {
                digest: mb.digest(),
                block: &mb,
                params,
            },
            Candidate {
                digest: twin.digest(),
                block: &twin,
                params,
            },
        ];
        assert_eq!(
            select_miniblocks(&candidates, &mb.prehash, cfs),
            vec![mb.digest().min(twin.digest())]
        );
    }
}

#[test]
fn winning_ensembles_vote_for_the_parent() {
    for cfs in [false, true] {
        let mut w = Setup::honest(6, cfs, 29).build();
        run_until(&mut w, 5);
        let (ebs, mbs) = (ensembles(&w), miniblocks(&w));
        let mut voted = 0;
        for (_, kb) in &w.log().keyblocks {
            let Some(entry) = kb.eb_entries.first() else { continue };
            let eb = &ebs[&entry.ensemble];
            let vote = prehash_vote(eb.miniblocks.iter().map(|d| &mbs[d].prehash));
            assert_eq!(vote, Some(kb.prehash));
            let paid: BTreeSet<NodeId> = kb
                .payload
                .iter()
                .filter(|r| r.kind == PayloadKind::TrainingFeeShare)
                .map(|r| r.payee)
                .collect();
            let producers: BTreeSet<NodeId> = eb.miniblocks.iter().map(|d| mbs[d].miner).collect();
            assert_eq!(paid, producers);
            voted += 1;
        }
        assert!(voted >= 5);
    }
}

#[test]
fn adversaries_gain_nothing() {
    use Strategy::*;
    let strategies = vec![Honest, Plagiarist, Honest, MetricInflater, Withholder, Honest];
    let setup = Setup {
        strategies,
        ..Setup::honest(6, true, 31)
    };
    let mut w = setup.build();
    run_until(&mut w, 5);
    let rejections = &w.log().rejections;
    assert!(
        rejections.get(&Rejection::OwnershipMismatch).copied().unwrap_or(0) > 0,
        "{rejections:?}"
    );
    assert!(
        rejections.get(&Rejection::MetricVMismatch).copied().unwrap_or(0) > 0,
        "{rejections:?}"
    );

    let (ebs, mbs) = (ensembles(&w), miniblocks(&w));
    let chain = main_chain(w.miners()[0].store());
    for kb in &chain[1..] {
        for r in &kb.payload {
            if r.kind == PayloadKind::TrainingFeeShare {
                assert!(![1, 4].contains(&r.payee.0), "height {} pays {:?}", kb.height, r.payee);
            }
        }
        for entry in &kb.eb_entries {
            let eb = &ebs[&entry.ensemble];
            assert_ne!(eb.miner, NodeId(3), "inflated ensemble ranked at height {}", kb.height);
            assert!(eb.miniblocks.iter().all(|d| ![1, 4].contains(&mbs[d].miner.0)));
        }
    }
    assert!(
        w.log().miniblocks.iter().any(|(_, mb, _)| mb.miner == NodeId(1)),
        "plagiarist never acted"
    );
    assert!(
        w.log().miniblocks.iter().any(|(_, mb, _)| mb.miner == NodeId(4)),
        "withholder never acted"
    );
}

fn ask(w: &World, miner: usize, digest: HashDigest) -> FetchReply {
    let mut m = w.miners()[miner].clone();
    let item = FetchItem::Model(digest);
    let env = Envelope {
        source: NodeId(99),
        dest: NodeId(miner as u32),
        sent: w.round(),
        payload: Message::Request(item),
    };
    let out = m.step(w.round(), vec![env]);
    out.outgoing
        .into_iter()
        .find_map(|o| match o {
            Outgoing::Send {
                to: NodeId(99),
                message: Message::Reply(i, reply),
            } if i == item => Some(reply),
            _ => None,
        })
        .expect("a reply to the request")
}

#[test]
fn models_are_released_once_the_validation_set_is_out() {
    use Strategy::*;
    let setup = Setup {
        strategies: vec![Honest, Honest, Withholder, Honest],
        ..Setup::honest(4, true, 37)
    };
    let mut w = setup.build();
    let own = |w: &World, who: u32| {
        w.log()
            .miniblocks
            .iter()
            .find(|(_, mb, _)| mb.miner == NodeId(who) && mb.height == 1)
            .map(|(_, mb, _)| mb.digest())
    };
    while own(&w, 0).is_none() || own(&w, 2).is_none() {
        w.step();
    }
    assert!(t1(&w, 1).is_none(), "validation set already published");
    let (mine, withheld) = (own(&w, 0).unwrap(), own(&w, 2).unwrap());
    assert_eq!(ask(&w, 0, mine), FetchReply::Deferred);
    assert_eq!(ask(&w, 1, mine), FetchReply::NotHeld);

    while w.miners()[0].phase() == bagchain_core::consensus::Phase::One
        || w.miners()[2].phase() == bagchain_core::consensus::Phase::One
    {
        w.step();
    }
    let FetchReply::Model(tree) = ask(&w, 0, mine) else {
        panic!("model not released")
    };
    let logged = trained(&w).into_iter().find(|(mb, _)| mb.digest() == mine).unwrap().1;
    assert_eq!(*tree, *logged);
    assert_eq!(ask(&w, 2, withheld), FetchReply::NotHeld);
}

#[test]
fn relays_forward_each_block_once() {
    let ring: Vec<(u32, u32, f64)> = (0..5).map(|i| (i, (i + 1) % 5, 1.0)).collect();
    let setup = Setup {
        topology: Some(Topology::mesh(5, &ring).unwrap()),
        ..Setup::honest(5, true, 41)
    };
    let mut w = setup.build();
    run_until(&mut w, 1);
    let (_, mb, _) = w
        .log()
        .miniblocks
        .iter()
        .find(|(_, mb, _)| mb.height == 2)
        .cloned()
        .expect("height-2 MiniBlock");
    let fresh = Arc::new(MiniBlock {
        timestamp: mb.timestamp + 1000,
        ..(*mb).clone()
    });
    let mut relay = w.miners()[0].clone();
    let deliver = |relay: &mut bagchain_core::consensus::MinerState, from: u32| {
        let env = Envelope {
            source: NodeId(from),
            dest: NodeId(0),
            sent: w.round(),
            payload: Message::MiniBlock(fresh.clone()),
        };
        relay
            .step(w.round(), vec![env])
            .outgoing
            .into_iter()
            .filter(|o| matches!(o, Outgoing::Broadcast { message: Message::MiniBlock(m), .. } if m.digest() == fresh.digest()))
            .collect::<Vec<_>>()
    };
    let first = deliver(&mut relay, 1);
    assert_eq!(
        first,
        vec![Outgoing::Broadcast {
            message: Message::MiniBlock(fresh.clone()),
            except: Some(NodeId(1))
        }]
    );
    assert!(deliver(&mut relay, 4).is_empty());
    assert!(deliver(&mut relay, 1).is_empty());
}

#[test]
fn keyblocks_complete_the_scheduled_task() {
    let mut w = Setup::honest(5, false, 43).build();
    run_until(&mut w, 4);
    for (_, kb) in &w.log().keyblocks {
        assert_eq!(kb.task_id, *w.tasks().by_index(kb.height as usize - 1).unwrap().0);
    }
}
