import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hrlnav import gridworld as gw
from hrlnav.gridworld import ACTIONS, AgentPose, EnvState, Heading, Manip, Nav, ToyAction

TOY11 = gw.builtin_layout("toy11")
TOY5 = gw.builtin_layout("toy5")

actions_st = st.lists(st.sampled_from(ACTIONS), min_size=1, max_size=80)


def at_door(layout, door=1):
    return EnvState(layout, AgentPose(*layout.door_front_cell, layout.door_facing), door=door)


def run(state, actions):
    for a in actions:
        if state.done:
            break
        state, *_ = gw.step(state, a)
    return state


def test_builtin_layouts_validate():
    for name in ("toy11", "toy7", "toy7_nodoor", "toy5"):
        gw.builtin_layout(name).validate()


def test_canonical_geometry():
    assert TOY11.k == 11 and TOY11.door_max == 5 and TOY11.max_episode_steps == 500
    assert TOY11.door_cell == (5, 5)
    assert TOY11.door_front_cell == (4, 5)
    assert TOY11.door_facing == Heading.EAST
    assert len(TOY11.left_room_cells) == 36


def test_reset_starts_in_left_room_with_closed_door():
    for seed in range(50):
        s, obs = gw.reset(TOY11, seed)
        assert s.pose.cell in TOY11.left_room_cells
        assert s.door == 1 and s.steps_elapsed == 0 and not s.done
        assert obs.door_state == 1


def test_reset_is_seeded():
    a, _ = gw.reset(TOY11, 123)
    b, _ = gw.reset(TOY11, 123)
    assert a == b


def test_reset_uniform_over_start_poses():
    rng = np.random.default_rng(0)
    n_bins = len(TOY11.left_room_cells) * 4
    counts = np.zeros(n_bins)
    index = {(c, h): i for i, (c, h) in enumerate((c, h) for c in TOY11.left_room_cells for h in Heading)}
    n = 14400
    for _ in range(n):
        s, _ = gw.reset(TOY11, rng)
        counts[index[(s.pose.cell, s.pose.heading)]] += 1
    assert stats.chisquare(counts).pvalue > 0.001


def test_door_opens_after_door_max_minus_one_slide_ups():
    s = at_door(TOY11)
    up = ToyAction(Nav.NOOP, Manip.SLIDE_UP)
    for i in range(TOY11.door_max - 1):
        assert s.door == 1 + i
        s, obs, r, _ = gw.step(s, up)
    assert s.door == TOY11.door_max == obs.door_state
    s, *_ = gw.step(s, up)
    assert s.door == TOY11.door_max  # saturates


def test_slide_down_closes_and_saturates():
    s = at_door(TOY11, door=3)
    down = ToyAction(Nav.NOOP, Manip.SLIDE_DOWN)
    s = run(s, [down] * 4)
    assert s.door == 1


def test_manipulation_ineffective_away_from_door():
    door_front = TOY11.door_front_cell
    for x, y in TOY11.free_cells():
        for h in Heading:
            if (x, y) == door_front and h == TOY11.door_facing:
                continue
            for m in (Manip.SLIDE_UP, Manip.SLIDE_DOWN):
                s = EnvState(TOY11, AgentPose(x, y, h), door=3)
                s2, *_ = gw.step(s, ToyAction(Nav.NOOP, m))
                assert s2.door == 3


def test_door_blocks_until_fully_open():
    fwd = ToyAction(Nav.GO_FORWARD, Manip.NOOP)
    for door in range(1, TOY11.door_max):
        s2, *_ = gw.step(at_door(TOY11, door), fwd)
        assert s2.pose.cell == TOY11.door_front_cell
    s2, *_ = gw.step(at_door(TOY11, TOY11.door_max), fwd)
    assert s2.pose.cell == TOY11.door_cell


def test_manipulation_applies_before_navigation():
    s = at_door(TOY11, TOY11.door_max - 1)
    s2, *_ = gw.step(s, ToyAction(Nav.GO_FORWARD, Manip.SLIDE_UP))
    assert s2.door == TOY11.door_max
    assert s2.pose.cell == TOY11.door_cell


def test_walls_block_forward_motion():
    s = EnvState(TOY11, AgentPose(1, 1, Heading.NORTH), door=1)
    s2, *_ = gw.step(s, ToyAction(Nav.GO_FORWARD, Manip.NOOP))
    assert s2.pose == s.pose


def test_turns_cycle_heading():
    s = EnvState(TOY11, AgentPose(2, 2, Heading.NORTH), door=1)
    s = run(s, [ToyAction(Nav.TURN_RIGHT, Manip.NOOP)] * 4)
    assert s.pose.heading == Heading.NORTH
    s, *_ = gw.step(s, ToyAction(Nav.TURN_LEFT, Manip.NOOP))
    assert s.pose.heading == Heading.WEST


@pytest.mark.parametrize("action", ACTIONS)
def test_energy_counts_actuated_subsystems(action):
    s = EnvState(TOY11, AgentPose(2, 2, Heading.EAST), door=1)
    _, _, r, _ = gw.step(s, action)
    expected = int(action.nav != Nav.NOOP) + int(action.manip != Manip.NOOP)
    assert r.r_energy == expected == action.energy
    assert r.r_energy in (0, 1, 2)
    assert r.total == pytest.approx(10.0 * r.r_success - 0.001 * r.r_energy)


def test_success_reward_and_termination():
    gx, gy = TOY11.goal_cell
    s = EnvState(TOY11, AgentPose(gx - 1, gy, Heading.EAST), door=TOY11.door_max)
    s2, _, r, done = gw.step(s, ToyAction(Nav.GO_FORWARD, Manip.SLIDE_UP))
    assert done and s2.done and r.r_success == 1
    assert r.total == pytest.approx(10.0 - 0.002)


def test_episode_caps_at_500_steps():
    s, _ = gw.reset(TOY11, 0)
    noop = ToyAction(Nav.NOOP, Manip.NOOP)
    for i in range(499):
        s, _, _, done = gw.step(s, noop)
        assert not done
    s, _, r, done = gw.step(s, noop)
    assert done and s.steps_elapsed == 500 and r.r_success == 0
    with pytest.raises(gw.EpisodeDoneError):
        gw.step(s, noop)


def test_observation_map_channels():
    s = EnvState(TOY11, AgentPose(2, 3, Heading.SOUTH), door=2)
    obs = gw.observe(s)
    m = obs.global_map
    assert m.shape == (4, 11, 11)
    assert m[0].sum() == np.sum(TOY11.cells == gw.CellKind.WALL)
    assert m[1, 3, 2] == pytest.approx(3 / 4) and m[1].sum() == pytest.approx(3 / 4)
    assert m[2, 5, 9] == 1.0 and m[2].sum() == 1.0
    assert m[3, 5, 5] == pytest.approx(2 / 5) and m[3].sum() == pytest.approx(2 / 5)
    assert obs.cos_yaw == pytest.approx(-1.0) and obs.sin_yaw == pytest.approx(0.0, abs=1e-12)
    assert not obs.next_to_door
    assert gw.observe(at_door(TOY11)).next_to_door


def test_yaw_trig_fields():
    for h in Heading:
        obs = gw.observe(EnvState(TOY11, AgentPose(2, 2, h), door=1))
        assert obs.cos_yaw == pytest.approx(np.cos(h * np.pi / 2), abs=1e-12)
        assert obs.sin_yaw == pytest.approx(np.sin(h * np.pi / 2), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), actions=actions_st)
def test_random_trajectories_keep_invariants(seed, actions):
    s, _ = gw.reset(TOY11, seed)
    for a in actions:
        if s.done:
            break
        prev = s
        s, obs, r, done = gw.step(s, a)
        assert TOY11.kind(*s.pose.cell) != gw.CellKind.WALL
        if s.pose.cell == TOY11.door_cell:
            assert s.door == TOY11.door_max
        assert 1 <= s.door <= TOY11.door_max
        assert abs(s.door - prev.door) <= 1
        assert s.steps_elapsed == prev.steps_elapsed + 1
        assert abs(s.pose.x - prev.pose.x) + abs(s.pose.y - prev.pose.y) <= 1
        assert np.all((obs.global_map >= 0) & (obs.global_map <= 1))
        assert done == (s.pose.cell == TOY11.goal_cell or s.steps_elapsed >= 500)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), actions=actions_st)
def test_render_parse_fixpoint(seed, actions):
    s, _ = gw.reset(TOY11, seed)
    s = run(s, actions)
    text = gw.render_text(s)
    back = gw.parse_render(text, TOY11)
    assert back == s
    assert gw.render_text(back) == text


def test_render_glyphs():
    text = gw.render_text(at_door(TOY11, 3))
    rows = text.splitlines()
    assert rows[5][4] == ">" and rows[5][5] == "3" and rows[5][9] == "G"
    assert rows[-1].startswith("step=0 door=3/5 pose=4,5,E goal=9,5")


def test_layout_round_trip():
    for name in ("toy11", "toy7", "toy7_nodoor", "toy5"):
        lay = gw.builtin_layout(name)
        back = gw.parse_layout(gw.format_layout(lay))
        assert np.array_equal(back.cells, lay.cells)
        assert back.left_room_cells == lay.left_room_cells
        assert (back.goal_cell, back.door_cell, back.door_facing, back.door_max) == (lay.goal_cell, lay.door_cell, lay.door_facing, lay.door_max)


BAD_LAYOUTS = {
    "no header": "k = 3\n###\n#L#\n###\n",
    "goal unreachable": "hrlnav-layout 1\nk = 5\n#####\n#L#G#\n#L#.#\n#L#.#\n#####\n",
    "door glyph without facing": "hrlnav-layout 1\nk = 5\n#####\n#L#.#\n#LDG#\n#L#.#\n#####\n",
    "leaky wall": "hrlnav-layout 1\nk = 5\ndoor_facing = E\n#####\n#L..#\n#LDG#\n#L#.#\n#####\n",
    "ragged rows": "hrlnav-layout 1\nk = 4\n####\n#L.G#\n####\n####\n",
}


@pytest.mark.parametrize("name", sorted(BAD_LAYOUTS))
def test_bad_layouts_rejected(name):
    with pytest.raises(gw.LayoutError):
        gw.parse_layout(BAD_LAYOUTS[name]).validate()


def test_unknown_builtin_layout():
    with pytest.raises(gw.LayoutError):
        gw.builtin_layout("nope")


def test_random_goal_outside_start_room():
    goals = set()
    for seed in range(100):
        s, _ = gw.reset(TOY11, seed, random_goal=True)
        assert s.goal not in TOY11.left_room_cells
        assert TOY11.kind(*s.goal) == gw.CellKind.FREE
        goals.add(s.goal)
    assert len(goals) > 5


def test_mutable_obs():
    s = EnvState(TOY11, AgentPose(3, 4, Heading.WEST), door=2)
    assert gw.mutable_obs(s).tolist() == [3, 4, 3, 2]
