use std::ffi::{c_char, CString};
use std::ptr;

use smfe_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { smfe_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn builtin(name: &str, horizon: usize) -> *mut SmfeGame {
    let name = CString::new(name).unwrap();
    let mut game = ptr::null_mut();
    assert_eq!(unsafe { smfe_game_builtin(name.as_ptr(), horizon, &mut game) }, SmfeStatus::Ok);
    game
}

#[test]
fn solve_and_query_infection() {
    unsafe {
        let game = builtin("infection", 3);
        let mut dims = SmfeDims::default();
        assert_eq!(smfe_game_dims(game, &mut dims), SmfeStatus::Ok);
        assert_eq!((dims.follower_states, dims.leader_states, dims.follower_actions), (2, 1, 2));
        assert_eq!(dims.leader_actions, 21);
        assert_eq!(smfe_game_validate(game), SmfeStatus::Ok);

        let mut opts = std::mem::zeroed::<SmfeSolveOptions>();
        smfe_solve_options_default(&mut opts);
        opts.z_resolution = 10;
        let mut sol = ptr::null_mut();
        assert_eq!(smfe_solve(game, &opts, &mut sol), SmfeStatus::Ok);
        assert_eq!(smfe_solution_stages(sol), 3);
        assert_eq!(smfe_solution_grid_points(sol), 11);

        let mut needed = 0;
        assert_eq!(
            smfe_solution_values(sol, false, ptr::null_mut(), 0, &mut needed),
            SmfeStatus::BufferTooSmall
        );
        assert_eq!(needed, 22);
        let mut values = vec![0.0; needed];
        assert_eq!(smfe_solution_values(sol, false, values.as_mut_ptr(), values.len(), &mut needed), SmfeStatus::Ok);
        assert!(values.iter().all(|v| v.is_finite() && *v <= 0.0));

        let (pi, z) = ([1.0], [0.5, 0.5]);
        let mut gl = vec![0.0; 21];
        let mut gf = vec![0.0; 4];
        assert_eq!(
            smfe_solution_prescription(sol, 1, pi.as_ptr(), 1, z.as_ptr(), 2, gl.as_mut_ptr(), 21, gf.as_mut_ptr(), 4),
            SmfeStatus::Ok
        );
        assert!((gl.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            smfe_solution_prescription(sol, 4, pi.as_ptr(), 1, z.as_ptr(), 2, gl.as_mut_ptr(), 21, gf.as_mut_ptr(), 4),
            SmfeStatus::InvalidArgument
        );

        let mut traj = ptr::null_mut();
        assert_eq!(smfe_forward(sol, false, 0, 0, &mut traj), SmfeStatus::Ok);
        assert_eq!(smfe_trajectory_len(traj), 3);
        let mut zt = [0.0; 2];
        assert_eq!(smfe_trajectory_mean_field(traj, 0, zt.as_mut_ptr(), 2, ptr::null_mut()), SmfeStatus::Ok);
        assert_eq!(zt, [0.5, 0.5]);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(smfe_write_artifacts(sol, traj, path.as_ptr()), SmfeStatus::Ok);
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("trajectory.csv").exists());

        smfe_trajectory_free(traj);
        smfe_solution_free(sol);
        smfe_game_free(game);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut game = ptr::null_mut();
        let name = CString::new("chess").unwrap();
        assert_eq!(smfe_game_builtin(name.as_ptr(), 1, &mut game), SmfeStatus::InvalidArgument);
        assert!(last_error().contains("chess"));
        assert!(game.is_null());

        assert_eq!(smfe_game_builtin(ptr::null(), 1, &mut game), SmfeStatus::NullPointer);
        assert_eq!(smfe_game_validate(ptr::null()), SmfeStatus::NullPointer);

        let bad = CString::new("horizon = 1\n[game]\nkind = \"infection\"\nq = 2.0\n").unwrap();
        assert_eq!(smfe_game_from_toml(bad.as_ptr(), &mut game), SmfeStatus::InvalidArgument);
        assert!(last_error().contains("q"));

        // infinite horizon that cannot converge in one iteration
        let g = builtin("tech", 0);
        let opts = SmfeSolveOptions {
            z_resolution: 4,
            max_iter: 1,
            ..Default::default()
        };
        let mut sol = ptr::null_mut();
        assert_eq!(smfe_solve(g, &opts, &mut sol), SmfeStatus::NonConvergence);
        assert!(sol.is_null());
        smfe_game_free(g);

        // null handles are accepted by the free functions
        smfe_game_free(ptr::null_mut());
        smfe_solution_free(ptr::null_mut());
        smfe_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn spec_hash_round_trips_through_toml() {
    unsafe {
        let text = CString::new("horizon = 2\n[game]\nkind = \"tech_adoption\"\n").unwrap();
        let mut a = ptr::null_mut();
        assert_eq!(smfe_game_from_toml(text.as_ptr(), &mut a), SmfeStatus::Ok);
        let b = builtin("tech", 2);
        let mut ha = [0 as c_char; 65];
        let mut hb = [0 as c_char; 65];
        assert_eq!(smfe_game_spec_hash(a, ha.as_mut_ptr(), 65), SmfeStatus::Ok);
        assert_eq!(smfe_game_spec_hash(b, hb.as_mut_ptr(), 65), SmfeStatus::Ok);
        assert_eq!(ha, hb);
        assert_eq!(smfe_game_spec_hash(a, ha.as_mut_ptr(), 64), SmfeStatus::BufferTooSmall);
        smfe_game_free(a);
        smfe_game_free(b);
    }
}
