"""Network realizations for distributed continuous-aperture downlinks.

A scenario bundles the physical constants, the transmit surfaces, and the
user layout for one randomized drop, and round-trips through a versioned
JSON file with unit-annotated field names.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

# Layout defaults (meters). Surfaces live on the z=0 plane; users above it.
REGION_HALFWIDTH = 10.0
IU_Z_RANGE = (0.5, 20.0)
EU_Z_RANGE = (0.5, 2.0)
EU_BOX_HALFWIDTH = 1.0
PLACEMENT_ATTEMPTS = 10000

_BASIS_TOL = 1e-12


class ScenarioError(ValueError):
    """Base class for scenario construction and I/O failures."""


class PlacementError(ScenarioError):
    """Rejection sampling could not fit the requested surfaces."""


class ScenarioFormatError(ScenarioError):
    """Scenario file is malformed: bad syntax or missing fields."""


class ScenarioValidationError(ScenarioError):
    """Scenario parsed but violates a structural invariant."""


@dataclass(frozen=True)
class PhysicalConstants:
    lam: float     # carrier wavelength [m]
    kappa: float   # wavenumber, 2*pi/lam [rad/m]
    Z0: float      # free-space wave impedance [ohm]
    Z: float       # receiver wave impedance [ohm]
    sigma2: float  # per-user receiver noise power [A^2]
    A_R: float     # receiver effective aperture, lam^2/(4*pi) [m^2]
    eh_a: float    # rectifier steepness [1/W]
    eh_b: float    # rectifier turn-on point [W]
    Q_max: float   # rectifier saturation power [W]

    @classmethod
    def from_wavelength(cls, lam: float = 0.1, Z0: float = 120.0 * math.pi,
                        Z: float = 25.0, sigma2: float = 1e-9,
                        eh_a: float = 1500.0, eh_b: float = 0.0022,
                        Q_max: float = 0.024) -> "PhysicalConstants":
        """Build constants with kappa and A_R derived from the wavelength."""
        return cls(lam=lam, kappa=2.0 * math.pi / lam, Z0=Z0, Z=Z,
                   sigma2=sigma2, A_R=lam ** 2 / (4.0 * math.pi),
                   eh_a=eh_a, eh_b=eh_b, Q_max=Q_max)

    def validate(self) -> None:
        for name in ("lam", "kappa", "Z0", "Z", "sigma2", "A_R",
                     "eh_a", "eh_b", "Q_max"):
            if not getattr(self, name) > 0:
                raise ScenarioValidationError(f"constant {name} must be > 0")
        if self.kappa != 2.0 * math.pi / self.lam:
            raise ScenarioValidationError("kappa != 2*pi/lam")
        if self.A_R != self.lam ** 2 / (4.0 * math.pi):
            raise ScenarioValidationError("A_R != lam^2/(4*pi)")


@dataclass(frozen=True)
class Surface:
    sid: int             # 1-based surface id
    center: np.ndarray   # (3,) center position [m], on z=0
    side: float          # edge length [m]
    area: float          # side^2 [m^2]
    power_budget: float  # per-surface transmit power budget [A^2]
    basis: np.ndarray    # (3,3) rows = i_hat, j_hat, k_hat tx frame

    def validate(self) -> None:
        if self.side <= 0:
            raise ScenarioValidationError(f"surface {self.sid}: side <= 0")
        if abs(self.area - self.side ** 2) > 1e-12 * self.area:
            raise ScenarioValidationError(f"surface {self.sid}: area != side^2")
        if self.power_budget <= 0:
            raise ScenarioValidationError(f"surface {self.sid}: budget <= 0")
        _check_orthonormal(self.basis, f"surface {self.sid} basis")


@dataclass(frozen=True)
class User:
    uid: int                     # 1-based: IUs 1..L, then EUs L+1..L+M
    kind: str                    # "IU" or "EU"
    position: np.ndarray         # (3,) [m], z >= 0.5
    rx_basis: np.ndarray         # (3,3) rows = receive frame axes
    antenna_normal: np.ndarray | None = None  # EU only, unit vector
    incidence_cos: float | None = None        # EU only, in [0, 1]

    def validate(self) -> None:
        if self.kind not in ("IU", "EU"):
            raise ScenarioValidationError(f"user {self.uid}: bad kind {self.kind!r}")
        if self.position[2] < 0.5:
            raise ScenarioValidationError(f"user {self.uid}: z < 0.5 m")
        _check_orthonormal(self.rx_basis, f"user {self.uid} rx basis")
        if self.kind == "EU":
            if self.antenna_normal is None or self.incidence_cos is None:
                raise ScenarioValidationError(
                    f"EU {self.uid}: missing antenna_normal/incidence_cos")
            if abs(np.linalg.norm(self.antenna_normal) - 1.0) > _BASIS_TOL:
                raise ScenarioValidationError(f"EU {self.uid}: normal not unit")
            if not 0.0 <= self.incidence_cos <= 1.0:
                raise ScenarioValidationError(f"EU {self.uid}: cos out of [0,1]")
        elif self.antenna_normal is not None or self.incidence_cos is not None:
            raise ScenarioValidationError(f"IU {self.uid}: has EU-only fields")


@dataclass(frozen=True)
class LayoutParams:
    region_halfwidth: float = REGION_HALFWIDTH
    iu_z: tuple[float, float] = IU_Z_RANGE
    eu_z: tuple[float, float] = EU_Z_RANGE
    eu_box_halfwidth: float = EU_BOX_HALFWIDTH
    max_attempts: int = PLACEMENT_ATTEMPTS


@dataclass(frozen=True)
class Scenario:
    constants: PhysicalConstants
    surfaces: tuple[Surface, ...]
    users: tuple[User, ...]
    total_aperture: float  # A_T, sum of surface areas [m^2]
    total_power: float     # P_t, total transmit power budget [A^2]
    seed: int

    @property
    def S(self) -> int:
        return len(self.surfaces)

    @property
    def K(self) -> int:
        return len(self.users)

    @property
    def L(self) -> int:
        return sum(1 for u in self.users if u.kind == "IU")

    @property
    def M(self) -> int:
        return sum(1 for u in self.users if u.kind == "EU")

    def iu_users(self) -> tuple[User, ...]:
        return tuple(u for u in self.users if u.kind == "IU")

    def eu_users(self) -> tuple[User, ...]:
        return tuple(u for u in self.users if u.kind == "EU")

    def validate(self) -> None:
        self.constants.validate()
        if not self.surfaces:
            raise ScenarioValidationError("no surfaces")
        if not self.users:
            raise ScenarioValidationError("no users")
        for s in self.surfaces:
            s.validate()
        for u in self.users:
            u.validate()
        # IUs must come first and ids must be 1..K in order.
        kinds = [u.kind for u in self.users]
        L = self.L
        if kinds != ["IU"] * L + ["EU"] * (self.K - L):
            raise ScenarioValidationError("users not ordered IU block then EU block")
        if [u.uid for u in self.users] != list(range(1, self.K + 1)):
            raise ScenarioValidationError("user ids not 1..K in order")
        if [s.sid for s in self.surfaces] != list(range(1, self.S + 1)):
            raise ScenarioValidationError("surface ids not 1..S in order")
        area_sum = sum(s.area for s in self.surfaces)
        if abs(area_sum - self.total_aperture) > 1e-12 * self.total_aperture:
            raise ScenarioValidationError("surface areas do not sum to A_T")
        budget_sum = sum(s.power_budget for s in self.surfaces)
        if abs(budget_sum - self.total_power) > 1e-12 * self.total_power:
            raise ScenarioValidationError("surface budgets do not sum to P_t")

    def same_as(self, other: "Scenario") -> bool:
        """Exact field-for-field equality, including float bit patterns."""
        if (self.seed != other.seed
                or self.total_aperture != other.total_aperture
                or self.total_power != other.total_power
                or self.constants != other.constants
                or len(self.surfaces) != len(other.surfaces)
                or len(self.users) != len(other.users)):
            return False
        for a, b in zip(self.surfaces, other.surfaces):
            if (a.sid != b.sid or a.side != b.side or a.area != b.area
                    or a.power_budget != b.power_budget
                    or not np.array_equal(a.center, b.center)
                    or not np.array_equal(a.basis, b.basis)):
                return False
        for a, b in zip(self.users, other.users):
            if (a.uid != b.uid or a.kind != b.kind
                    or not np.array_equal(a.position, b.position)
                    or not np.array_equal(a.rx_basis, b.rx_basis)
                    or a.incidence_cos != b.incidence_cos):
                return False
            if (a.antenna_normal is None) != (b.antenna_normal is None):
                return False
            if a.antenna_normal is not None and not np.array_equal(
                    a.antenna_normal, b.antenna_normal):
                return False
        return True


def _check_orthonormal(basis: np.ndarray, what: str) -> None:
    if basis.shape != (3, 3):
        raise ScenarioValidationError(f"{what}: shape != (3,3)")
    if np.max(np.abs(basis @ basis.T - np.eye(3))) > _BASIS_TOL:
        raise ScenarioValidationError(f"{what}: not orthonormal")


def generate_scenario(seed: int, n_surfaces: int, n_iu: int, n_eu: int,
                      total_aperture: float, total_power: float,
                      constants: PhysicalConstants | None = None,
                      layout: LayoutParams | None = None) -> Scenario:
    """Draw one random scenario.

    Surfaces are axis-aligned squares on z=0 with centers rejection-sampled
    for non-overlap (minimum center spacing = side length). IUs scatter over
    the whole region; each EU clusters in an xy-box around one uniformly
    chosen surface. Draw order is fixed (surfaces, IUs, EUs) so a seed pins
    the whole layout.
    """
    if n_surfaces < 1 or n_iu < 0 or n_eu < 0 or n_iu + n_eu < 1:
        raise ScenarioError("need >= 1 surface and >= 1 user")
    if total_aperture <= 0 or total_power <= 0:
        raise ScenarioError("total aperture and power must be > 0")
    constants = constants or PhysicalConstants.from_wavelength()
    layout = layout or LayoutParams()
    rng = np.random.default_rng(seed)  # PCG64: documented, portable stream

    side = math.sqrt(total_aperture / n_surfaces)
    half = layout.region_halfwidth
    eye = np.eye(3)

    centers: list[np.ndarray] = []
    for s in range(n_surfaces):
        for _ in range(layout.max_attempts):
            c = np.array([rng.uniform(-half, half), rng.uniform(-half, half), 0.0])
            if all(np.hypot(c[0] - p[0], c[1] - p[1]) >= side for p in centers):
                centers.append(c)
                break
        else:
            raise PlacementError(
                f"could not place surface {s + 1} of {n_surfaces} with "
                f"minimum center spacing {side:.3f} m after "
                f"{layout.max_attempts} attempts")

    surfaces = tuple(
        Surface(sid=i + 1, center=c, side=side, area=side ** 2,
                power_budget=total_power / n_surfaces, basis=eye.copy())
        for i, c in enumerate(centers))

    users: list[User] = []
    for i in range(n_iu):
        pos = np.array([rng.uniform(-half, half), rng.uniform(-half, half),
                        rng.uniform(*layout.iu_z)])
        users.append(User(uid=i + 1, kind="IU", position=pos,
                          rx_basis=eye.copy()))
    for i in range(n_eu):
        anchor = centers[int(rng.integers(0, n_surfaces))]
        bw = layout.eu_box_halfwidth
        pos = np.array([anchor[0] + rng.uniform(-bw, bw),
                        anchor[1] + rng.uniform(-bw, bw),
                        rng.uniform(*layout.eu_z)])
        normal = np.array([0.0, 0.0, -1.0])  # faces the surface plane
        users.append(User(uid=n_iu + i + 1, kind="EU", position=pos,
                          rx_basis=eye.copy(), antenna_normal=normal,
                          incidence_cos=_incidence_cos(pos, centers, normal)))

    scn = Scenario(constants=constants, surfaces=surfaces, users=tuple(users),
                   total_aperture=total_aperture, total_power=total_power,
                   seed=seed)
    scn.validate()
    return scn


def _incidence_cos(pos: np.ndarray, centers: list[np.ndarray],
                   normal: np.ndarray) -> float:
    """Cosine between the antenna boresight and the ray from the nearest
    surface center, clamped to [0, 1]."""
    nearest = min(centers, key=lambda c: float(np.linalg.norm(pos - c)))
    d = pos - nearest
    d = d / np.linalg.norm(d)
    # Arrival direction at the antenna is -d; boresight is the normal.
    return float(np.clip(np.dot(normal, -d), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Serialization. JSON with unit-suffixed keys; format_version gates parsing.

def scenario_to_dict(scn: Scenario) -> dict:
    c = scn.constants
    return {
        "format_version": FORMAT_VERSION,
        "seed": scn.seed,
        "total_aperture_m2": scn.total_aperture,
        "total_power_A2": scn.total_power,
        "constants": {
            "lambda_m": c.lam,
            "kappa_rad_per_m": c.kappa,
            "Z0_ohm": c.Z0,
            "Z_ohm": c.Z,
            "sigma2_A2": c.sigma2,
            "A_R_m2": c.A_R,
            "eh_a_per_W": c.eh_a,
            "eh_b_W": c.eh_b,
            "Q_max_W": c.Q_max,
        },
        "surfaces": [
            {
                "id": s.sid,
                "center_m": list(s.center),
                "side_m": s.side,
                "area_m2": s.area,
                "power_budget_A2": s.power_budget,
                "basis": [list(row) for row in s.basis],
            }
            for s in scn.surfaces
        ],
        "users": [
            _user_to_dict(u) for u in scn.users
        ],
    }


def _user_to_dict(u: User) -> dict:
    d = {
        "id": u.uid,
        "kind": u.kind,
        "position_m": list(u.position),
        "rx_basis": [list(row) for row in u.rx_basis],
    }
    if u.kind == "EU":
        d["antenna_normal"] = list(u.antenna_normal)
        d["incidence_cos"] = u.incidence_cos
    return d


def scenario_from_dict(data: dict) -> Scenario:
    try:
        version = data["format_version"]
        if version != FORMAT_VERSION:
            raise ScenarioFormatError(
                f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
        cd = data["constants"]
        constants = PhysicalConstants(
            lam=float(cd["lambda_m"]), kappa=float(cd["kappa_rad_per_m"]),
            Z0=float(cd["Z0_ohm"]), Z=float(cd["Z_ohm"]),
            sigma2=float(cd["sigma2_A2"]), A_R=float(cd["A_R_m2"]),
            eh_a=float(cd["eh_a_per_W"]), eh_b=float(cd["eh_b_W"]),
            Q_max=float(cd["Q_max_W"]))
        surfaces = tuple(
            Surface(sid=int(s["id"]), center=np.array(s["center_m"], float),
                    side=float(s["side_m"]), area=float(s["area_m2"]),
                    power_budget=float(s["power_budget_A2"]),
                    basis=np.array(s["basis"], float))
            for s in data["surfaces"])
        users = []
        for u in data["users"]:
            kind = u["kind"]
            users.append(User(
                uid=int(u["id"]), kind=kind,
                position=np.array(u["position_m"], float),
                rx_basis=np.array(u["rx_basis"], float),
                antenna_normal=(np.array(u["antenna_normal"], float)
                                if kind == "EU" else None),
                incidence_cos=(float(u["incidence_cos"])
                               if kind == "EU" else None)))
        scn = Scenario(constants=constants, surfaces=surfaces,
                       users=tuple(users),
                       total_aperture=float(data["total_aperture_m2"]),
                       total_power=float(data["total_power_A2"]),
                       seed=int(data["seed"]))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad scenario structure: {exc}") from exc
    scn.validate()
    return scn


def save_scenario(scn: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scn), indent=2) + "\n")


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"unparseable scenario file: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioFormatError("scenario file is not a key-value document")
    return scenario_from_dict(data)
