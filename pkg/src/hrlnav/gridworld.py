"""Interactive two-room grid world with a sliding door.

The agent is a simplified mobile manipulator: a base that turns and moves one
cell at a time, and an arm that slides the door up or down when the agent
stands in front of the door facing it.  Every step carries one navigation and
one manipulation sub-action, so base and arm can be actuated together.

Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row; arrays are
indexed ``[y, x]``.  Heading 0 is north (decreasing ``y``) and turning right
increments the heading index.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "CellKind",
    "Heading",
    "Nav",
    "Manip",
    "ToyAction",
    "ACTIONS",
    "AgentPose",
    "GridLayout",
    "EnvState",
    "Observation",
    "RewardBreakdown",
    "LayoutError",
    "EpisodeDoneError",
    "W_SUCCESS",
    "W_ENERGY",
    "reset",
    "step",
    "observe",
    "mutable_obs",
    "optimal_steps",
    "distance_table",
    "optimal_action",
    "render_text",
    "parse_render",
    "parse_layout",
    "format_layout",
    "load_layout",
    "builtin_layout",
]

W_SUCCESS = 10.0
W_ENERGY = -0.001

LAYOUT_MAGIC = "hrlnav-layout"
LAYOUT_VERSION = 1


class LayoutError(ValueError):
    """Raised for malformed or inconsistent layouts."""


class EpisodeDoneError(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


class CellKind(IntEnum):
    FREE = 0
    WALL = 1
    DOOR = 2


class Heading(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]


_DELTAS = {
    Heading.NORTH: (0, -1),
    Heading.EAST: (1, 0),
    Heading.SOUTH: (0, 1),
    Heading.WEST: (-1, 0),
}
_HEADING_LETTERS = "NESW"


class Nav(IntEnum):
    TURN_LEFT = 0
    TURN_RIGHT = 1
    GO_FORWARD = 2
    NOOP = 3


class Manip(IntEnum):
    SLIDE_UP = 0
    SLIDE_DOWN = 1
    NOOP = 2


class ToyAction(NamedTuple):
    nav: Nav = Nav.NOOP
    manip: Manip = Manip.NOOP

    @property
    def energy(self) -> int:
        return int(self.nav != Nav.NOOP) + int(self.manip != Manip.NOOP)


# the full joint action set, 4 x 3 = 12 actions
ACTIONS: tuple[ToyAction, ...] = tuple(ToyAction(n, m) for n in Nav for m in Manip)


class AgentPose(NamedTuple):
    x: int
    y: int
    heading: Heading

    @property
    def cell(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclasses.dataclass(frozen=True, eq=False)
class GridLayout:
    """Static description of a map.

    ``cells`` is a ``k x k`` int array of :class:`CellKind` indexed ``[y, x]``.
    A layout without a door (``door_cell is None``) is a plain navigation map.
    """

    k: int
    cells: np.ndarray
    left_room_cells: tuple[tuple[int, int], ...]
    goal_cell: tuple[int, int]
    door_cell: tuple[int, int] | None = None
    door_facing: Heading | None = None
    door_max: int = 5
    max_episode_steps: int = 500

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "left_room_cells", tuple(tuple(c) for c in self.left_room_cells))
        object.__setattr__(self, "goal_cell", tuple(self.goal_cell))
        if self.door_cell is not None:
            object.__setattr__(self, "door_cell", tuple(self.door_cell))
        if self.door_facing is not None:
            object.__setattr__(self, "door_facing", Heading(self.door_facing))

    @property
    def has_door(self) -> bool:
        return self.door_cell is not None

    @property
    def door_front_cell(self) -> tuple[int, int] | None:
        if self.door_cell is None:
            return None
        dx, dy = self.door_facing.delta
        return (self.door_cell[0] - dx, self.door_cell[1] - dy)

    def kind(self, x: int, y: int) -> CellKind:
        if not (0 <= x < self.k and 0 <= y < self.k):
            return CellKind.WALL
        return CellKind(int(self.cells[y, x]))

    def free_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.cells == CellKind.FREE)
        return [(int(x), int(y)) for y, x in zip(ys, xs)]

    def with_goal(self, goal: tuple[int, int]) -> GridLayout:
        return dataclasses.replace(self, goal_cell=tuple(goal))

    def validate(self) -> GridLayout:
        """Check the layout invariants, raising :class:`LayoutError`."""
        k = self.k
        if self.cells.shape != (k, k):
            raise LayoutError(f"cells shape {self.cells.shape} does not match k={k}")
        n_doors = int(np.sum(self.cells == CellKind.DOOR))
        if not self.left_room_cells:
            raise LayoutError("layout has no start (left-room) cells")
        for c in self.left_room_cells:
            if self.kind(*c) != CellKind.FREE:
                raise LayoutError(f"start cell {c} is not free")
        if self.kind(*self.goal_cell) != CellKind.FREE:
            raise LayoutError(f"goal cell {self.goal_cell} is not free")
        if self.goal_cell in self.left_room_cells:
            raise LayoutError("goal cell lies inside the start room")
        if self.max_episode_steps < 1:
            raise LayoutError("max_episode_steps must be positive")
        if self.door_cell is None:
            if n_doors:
                raise LayoutError("door glyph present but no door cell declared")
            reach = _flood(self, self.goal_cell, door_open=True)
            if any(c not in reach for c in self.left_room_cells):
                raise LayoutError("goal unreachable from some start cells")
            return self
        if n_doors != 1:
            raise LayoutError(f"expected exactly one door cell, found {n_doors}")
        if self.kind(*self.door_cell) != CellKind.DOOR:
            raise LayoutError(f"door_cell {self.door_cell} is not a door glyph")
        if self.door_facing is None:
            raise LayoutError("door_facing is required when the layout has a door")
        if self.door_max < 2:
            raise LayoutError("door_max must be >= 2")
        if self.kind(*self.door_front_cell) != CellKind.FREE:
            raise LayoutError(f"door front cell {self.door_front_cell} is not free")
        closed = _flood(self, self.goal_cell, door_open=False)
        if any(c in closed for c in self.left_room_cells):
            raise LayoutError("goal reachable from the start room with the door closed")
        opened = _flood(self, self.goal_cell, door_open=True)
        if any(c not in opened for c in self.left_room_cells):
            raise LayoutError("goal unreachable from some start cells with the door open")
        return self

    def static_channel(self) -> np.ndarray:
        return (self.cells == CellKind.WALL).astype(np.float64)


def _flood(layout: GridLayout, origin, door_open: bool) -> set[tuple[int, int]]:
    seen = {tuple(origin)}
    queue = deque(seen)
    while queue:
        x, y = queue.popleft()
        for dx, dy in _DELTAS.values():
            c = (x + dx, y + dy)
            kind = layout.kind(*c)
            if c in seen or kind == CellKind.WALL or (kind == CellKind.DOOR and not door_open):
                continue
            seen.add(c)
            queue.append(c)
    return seen


@dataclasses.dataclass(frozen=True, eq=False)
class EnvState:
    layout: GridLayout
    pose: AgentPose
    door: int
    steps_elapsed: int = 0
    done: bool = False
    goal: tuple[int, int] | None = None

    def __post_init__(self):
        if self.goal is None:
            object.__setattr__(self, "goal", self.layout.goal_cell)

    def key(self) -> tuple:
        """Hashable summary used for equality checks in tests."""
        return (tuple(self.pose), self.door, self.steps_elapsed, self.done, self.goal)

    def __eq__(self, other):
        if not isinstance(other, EnvState):
            return NotImplemented
        return self.layout is other.layout and self.key() == other.key()

    __hash__ = None


@dataclasses.dataclass(frozen=True, eq=False)
class Observation:
    agent_position: tuple[int, int]
    agent_yaw: int
    door_state: int
    cos_yaw: float
    sin_yaw: float
    goal_position: tuple[int, int]
    next_to_door: bool
    global_map: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.agent_position == other.agent_position
            and self.agent_yaw == other.agent_yaw
            and self.door_state == other.door_state
            and self.cos_yaw == other.cos_yaw
            and self.sin_yaw == other.sin_yaw
            and self.goal_position == other.goal_position
            and self.next_to_door == other.next_to_door
            and np.array_equal(self.global_map, other.global_map)
        )

    __hash__ = None


class RewardBreakdown(NamedTuple):
    r_success: int
    r_energy: int

    @property
    def total(self) -> float:
        return W_SUCCESS * self.r_success + W_ENERGY * self.r_energy


def reset(layout: GridLayout, rng_seed, *, random_goal: bool = False) -> tuple[EnvState, Observation]:
    """Start an episode at a uniformly random start-room cell and heading.

    ``rng_seed`` may be an int or a :class:`numpy.random.Generator`.
    """
    layout.validate()
    rng = np.random.default_rng(rng_seed)
    idx = int(rng.integers(len(layout.left_room_cells) * 4))
    (x, y), heading = layout.left_room_cells[idx // 4], Heading(idx % 4)
    goal = layout.goal_cell
    if random_goal:
        candidates = _goal_candidates(layout)
        goal = candidates[int(rng.integers(len(candidates)))]
    state = EnvState(layout, AgentPose(x, y, heading), door=1, goal=goal)
    return state, observe(state)


def _goal_candidates(layout: GridLayout) -> list[tuple[int, int]]:
    left = set(layout.left_room_cells)
    reach = _flood(layout, layout.goal_cell, door_open=False)
    return sorted(c for c in reach if c not in left and c != layout.door_front_cell)


def _transition(layout: GridLayout, pose: AgentPose, door: int, action: ToyAction) -> tuple[AgentPose, int]:
    # manipulation acts before navigation within one step
    if layout.has_door and action.manip != Manip.NOOP:
        if pose.cell == layout.door_front_cell and pose.heading == layout.door_facing:
            if action.manip == Manip.SLIDE_UP:
                door = min(door + 1, layout.door_max)
            else:
                door = max(door - 1, 1)
    x, y, heading = pose
    if action.nav == Nav.TURN_LEFT:
        heading = Heading((heading - 1) % 4)
    elif action.nav == Nav.TURN_RIGHT:
        heading = Heading((heading + 1) % 4)
    elif action.nav == Nav.GO_FORWARD:
        dx, dy = heading.delta
        kind = layout.kind(x + dx, y + dy)
        if kind == CellKind.FREE or (kind == CellKind.DOOR and door == layout.door_max):
            x, y = x + dx, y + dy
    return AgentPose(x, y, heading), door


def step(state: EnvState, action: ToyAction) -> tuple[EnvState, Observation, RewardBreakdown, bool]:
    if state.done:
        raise EpisodeDoneError("cannot step a finished episode; call reset()")
    action = ToyAction(Nav(action[0]), Manip(action[1]))
    pose, door = _transition(state.layout, state.pose, state.door, action)
    success = int(pose.cell == state.goal)
    steps = state.steps_elapsed + 1
    done = bool(success) or steps >= state.layout.max_episode_steps
    nxt = EnvState(state.layout, pose, door, steps, done, state.goal)
    return nxt, observe(nxt), RewardBreakdown(success, action.energy), done


def observe(state: EnvState) -> Observation:
    layout = state.layout
    pose = state.pose
    k = layout.k
    gmap = np.zeros((4, k, k))
    gmap[0] = layout.static_channel()
    gmap[1, pose.y, pose.x] = (int(pose.heading) + 1) / 4.0
    gx, gy = state.goal
    gmap[2, gy, gx] = 1.0
    if layout.has_door:
        dx, dy = layout.door_cell
        gmap[3, dy, dx] = state.door / layout.door_max
    angle = int(pose.heading) * np.pi / 2
    next_to_door = layout.has_door and pose.cell == layout.door_front_cell and pose.heading == layout.door_facing
    return Observation(
        agent_position=pose.cell,
        agent_yaw=int(pose.heading),
        door_state=state.door,
        cos_yaw=float(np.cos(angle)),
        sin_yaw=float(np.sin(angle)),
        goal_position=tuple(state.goal),
        next_to_door=bool(next_to_door),
        global_map=gmap,
    )


def mutable_obs(state: EnvState) -> np.ndarray:
    """The agent-changeable part of the observation: ``(x, y, yaw, door)``."""
    p = state.pose
    return np.array([p.x, p.y, int(p.heading), state.door], dtype=np.int64)


# ---------------------------------------------------------------------------
# shortest-path oracle


def _all_states(layout: GridLayout):
    doors = range(1, layout.door_max + 1) if layout.has_door else (1,)
    cells = layout.free_cells() + ([layout.door_cell] if layout.has_door else [])
    for x, y in cells:
        for h in Heading:
            for d in doors:
                yield (x, y, int(h), d)


def optimal_steps(layout: GridLayout, start: AgentPose, door: int = 1, goal=None) -> int | None:
    """Minimum number of steps to reach the goal, or ``None`` if unreachable.

    Breadth-first search over ``(x, y, heading, door)`` with all 12 joint actions.
    """
    goal = tuple(goal or layout.goal_cell)
    s0 = (start[0], start[1], int(start[2]), door)
    if (s0[0], s0[1]) == goal:
        return 0
    dist = {s0: 0}
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        pose = AgentPose(s[0], s[1], Heading(s[2]))
        for a in ACTIONS:
            p, d = _transition(layout, pose, s[3], a)
            n = (p.x, p.y, int(p.heading), d)
            if n in dist:
                continue
            if (p.x, p.y) == goal:
                return dist[s] + 1
            dist[n] = dist[s] + 1
            queue.append(n)
    return None


def distance_table(layout: GridLayout, goal=None) -> dict[tuple[int, int, int, int], int]:
    """Steps-to-goal for every reachable ``(x, y, heading, door)`` state.

    Computed by a backward search from the goal states over the reversed
    transition graph; states that cannot reach the goal are absent.
    """
    goal = tuple(goal or layout.goal_cell)
    preds: dict[tuple, list[tuple]] = {}
    states = list(_all_states(layout))
    for s in states:
        pose = AgentPose(s[0], s[1], Heading(s[2]))
        for a in ACTIONS:
            p, d = _transition(layout, pose, s[3], a)
            preds.setdefault((p.x, p.y, int(p.heading), d), []).append(s)
    dist = {s: 0 for s in states if (s[0], s[1]) == goal}
    queue = deque(dist)
    while queue:
        s = queue.popleft()
        for p in preds.get(s, ()):
            if p not in dist:
                dist[p] = dist[s] + 1
                queue.append(p)
    return dist


def optimal_action(layout: GridLayout, state: EnvState, table=None) -> ToyAction:
    """A greedy action along a shortest path (lowest energy among ties)."""
    table = table if table is not None else distance_table(layout, state.goal)
    best, best_key = None, None
    for a in ACTIONS:
        p, d = _transition(layout, state.pose, state.door, a)
        n = (p.x, p.y, int(p.heading), d)
        if (p.x, p.y) == state.goal:
            cost = 0
        elif n in table:
            cost = table[n]
        else:
            continue
        key = (cost, a.energy)
        if best_key is None or key < best_key:
            best, best_key = a, key
    if best is None:
        raise ValueError("goal unreachable from the current state")
    return best


# ---------------------------------------------------------------------------
# text rendering

_AGENT_GLYPHS = "^>v<"
_STATIC_GLYPHS = {CellKind.FREE: ".", CellKind.WALL: "#"}


def render_text(state: EnvState) -> str:
    """One glyph per cell plus a status line.

    Walls ``#``, free ``.``, goal ``G``, agent ``^ > v <`` by heading, and the
    door as its state digit (``1`` closed up to ``door_max`` open).
    """
    layout = state.layout
    rows = []
    for y in range(layout.k):
        row = []
        for x in range(layout.k):
            kind = layout.kind(x, y)
            if (x, y) == state.pose.cell:
                row.append(_AGENT_GLYPHS[state.pose.heading])
            elif kind == CellKind.DOOR:
                row.append(str(state.door))
            elif (x, y) == tuple(state.goal):
                row.append("G")
            else:
                row.append(_STATIC_GLYPHS[kind])
        rows.append("".join(row))
    p = state.pose
    rows.append(
        f"step={state.steps_elapsed} door={state.door}/{layout.door_max} "
        f"pose={p.x},{p.y},{_HEADING_LETTERS[p.heading]} goal={state.goal[0]},{state.goal[1]} "
        f"done={int(state.done)}"
    )
    return "\n".join(rows)


def parse_render(text: str, layout: GridLayout) -> EnvState:
    """Inverse of :func:`render_text` for a known layout (debug helper)."""
    lines = text.strip("\n").split("\n")
    status = dict(item.split("=", 1) for item in lines[-1].split())
    x, y, h = status["pose"].split(",")
    gx, gy = (int(v) for v in status["goal"].split(","))
    door = int(status["door"].split("/")[0])
    grid = lines[:-1]
    if len(grid) != layout.k or any(len(r) != layout.k for r in grid):
        raise LayoutError("rendered grid does not match the layout size")
    if grid[int(y)][int(x)] != _AGENT_GLYPHS[_HEADING_LETTERS.index(h)]:
        raise LayoutError("agent glyph disagrees with the status line")
    return EnvState(
        layout,
        AgentPose(int(x), int(y), Heading(_HEADING_LETTERS.index(h))),
        door=door,
        steps_elapsed=int(status["step"]),
        done=bool(int(status["done"])),
        goal=(gx, gy),
    )


# ---------------------------------------------------------------------------
# layout files


def parse_layout(text: str) -> GridLayout:
    """Parse a layout file.

    Format::

        hrlnav-layout 1
        k = 11
        door_max = 5
        max_episode_steps = 500
        door_facing = E
        <k rows of glyphs>

    Glyphs: ``#`` wall, ``.`` free, ``D`` door, ``G`` goal (free),
    ``L`` start-room cell (free).  ``door_facing`` is the heading the agent
    must have in front of the door (N, E, S or W) and is omitted for door-free
    maps.  Blank lines and lines starting with ``;`` are ignored.
    """
    lines = [ln.rstrip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith(";")]
    if not lines:
        raise LayoutError("empty layout file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != LAYOUT_MAGIC:
        raise LayoutError(f"missing '{LAYOUT_MAGIC} <version>' header")
    if int(head[1]) != LAYOUT_VERSION:
        raise LayoutError(f"unsupported layout version {head[1]}")
    fields: dict[str, str] = {}
    rows: list[str] = []
    for ln in lines[1:]:
        if "=" in ln and not rows:
            key, value = (s.strip() for s in ln.split("=", 1))
            fields[key] = value
        else:
            rows.append(ln.strip())
    try:
        k = int(fields["k"])
    except KeyError:
        raise LayoutError("layout file is missing 'k'") from None
    if len(rows) != k or any(len(r) != k for r in rows):
        raise LayoutError(f"expected {k} rows of {k} glyphs")
    cells = np.zeros((k, k), dtype=np.int8)
    left, goal, door = [], None, None
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "#":
                cells[y, x] = CellKind.WALL
            elif ch == "D":
                cells[y, x] = CellKind.DOOR
                door = (x, y)
            elif ch in ".GL":
                if ch == "G":
                    if goal is not None:
                        raise LayoutError("more than one goal glyph")
                    goal = (x, y)
                elif ch == "L":
                    left.append((x, y))
            else:
                raise LayoutError(f"unknown glyph {ch!r} at ({x}, {y})")
    if goal is None:
        raise LayoutError("layout has no goal glyph")
    facing = fields.get("door_facing")
    layout = GridLayout(
        k=k,
        cells=cells,
        left_room_cells=tuple(left),
        goal_cell=goal,
        door_cell=door,
        door_facing=Heading(_HEADING_LETTERS.index(facing)) if facing else None,
        door_max=int(fields.get("door_max", 5)),
        max_episode_steps=int(fields.get("max_episode_steps", 500)),
    )
    return layout.validate()


def format_layout(layout: GridLayout) -> str:
    out = [
        f"{LAYOUT_MAGIC} {LAYOUT_VERSION}",
        f"k = {layout.k}",
        f"door_max = {layout.door_max}",
        f"max_episode_steps = {layout.max_episode_steps}",
    ]
    if layout.has_door:
        out.append(f"door_facing = {_HEADING_LETTERS[layout.door_facing]}")
    left = set(layout.left_room_cells)
    for y in range(layout.k):
        row = []
        for x in range(layout.k):
            kind = layout.kind(x, y)
            if kind == CellKind.WALL:
                row.append("#")
            elif kind == CellKind.DOOR:
                row.append("D")
            elif (x, y) == layout.goal_cell:
                row.append("G")
            elif (x, y) in left:
                row.append("L")
            else:
                row.append(".")
        out.append("".join(row))
    return "\n".join(out) + "\n"


def load_layout(path: str | Path) -> GridLayout:
    return parse_layout(Path(path).read_text())


def builtin_layout(name: str) -> GridLayout:
    """Load a bundled layout: ``toy11``, ``toy7``, ``toy7_nodoor`` or ``toy5``."""
    fname = name if name.endswith(".layout") else f"{name}.layout"
    try:
        text = resources.files("hrlnav.layouts").joinpath(fname).read_text()
    except FileNotFoundError:
        raise LayoutError(f"no bundled layout named {name!r}") from None
    return parse_layout(text)
