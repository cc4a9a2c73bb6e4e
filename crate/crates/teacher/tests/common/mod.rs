#![allow(dead_code)]

use std::sync::Arc;

use manic_core::contentment::PreferenceConfig;
use manic_core::learning::{SystemDims, Topology};
use manic_core::{ActionSpace, ContentmentModel, FrameDims, LearningSystem};
use manic_teacher::{ContentmentHandle, GenerateConfig, Store, TeacherService};

pub fn small_system(seed: u64) -> LearningSystem {
    let dims = SystemDims {
        belief_dims: 2,
        action_dims: 4,
        frame: FrameDims::new(8, 8, 3),
        aux_dims: 0,
    };
    let topo = Topology {
        transition_hidden: vec![8],
        decoder_hidden: vec![8],
        encoder_hidden: None,
    };
    LearningSystem::new(dims, &topo, seed).unwrap()
}

pub fn service(dir: &std::path::Path, pref: PreferenceConfig) -> TeacherService {
    let ls = small_system(3);
    let cm = ContentmentModel::new(2, &[6], 5).unwrap();
    TeacherService::new(
        Store::open(dir).unwrap(),
        Arc::new(ls),
        ActionSpace::Discrete { n: 4 },
        ContentmentHandle::new(cm),
        pref,
        GenerateConfig {
            pool_size: 24,
            horizon: 4,
            refine_iterations: 2,
            ..GenerateConfig::default()
        },
    )
    .unwrap()
}
