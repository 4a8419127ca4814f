'''
Zone-of-tolerance satisfaction behaviour, persona-driven context generation
and the satisfaction dataset CSV format.
'''
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from opa.config import get_param
from opa.errors import ConfigError, DatasetError

logger = logging.getLogger(__name__)

DATASET_COLUMNS = ['Date', 'Time', 'Day', 'Classified days', 'Time period', 'Location', 'Location name', 'Speed',
                   'Speed range', 'Activity', 'Request arrived', 'Application', 'Service', 'Demand rate', 'Min rate',
                   'Given rate', 'Delta', 'Max Delta', 'Satisfaction']
USER_ID_COLUMN = 'User ID'

ZOT_THRESHOLDS = np.array([0.25, 0.5, 0.75])
LEVELS = (1, 2, 3, 4, 5)

TIME_PERIODS = ('morning', 'afternoon', 'evening', 'night')
SPEED_RANGES = ('low', 'med', 'high')


@dataclass(frozen=True)
class UserContext:

    user_id: int
    date: str
    time: str
    day: str
    classified_day: str
    time_period: str
    location: tuple
    location_name: str
    speed: float
    speed_range: str
    activity: str
    request_arrived: int
    application: str
    service: str
    demand_rate: int
    min_rate: int
    max_delta: int

    def __post_init__(self):

        if not self.demand_rate >= self.min_rate >= 0:
            raise DatasetError("Expected demand_rate >= min_rate >= 0, got {} and {}.".format(self.demand_rate, self.min_rate))

        if self.max_delta < 0:
            raise DatasetError("max_delta must be non-negative, got {}.".format(self.max_delta))

        if self.request_arrived not in (0, 1):
            raise DatasetError("request_arrived must be 0 or 1.")


@dataclass(frozen=True)
class LabeledSample:

    context: UserContext
    given_rate: int
    delta: int
    satisfaction: int

    def __post_init__(self):

        if self.delta != self.context.demand_rate - self.given_rate:
            raise DatasetError("Delta {} does not equal demand minus given rate.".format(self.delta))

        if self.satisfaction not in LEVELS:
            raise DatasetError("Satisfaction level {} outside 1-5.".format(self.satisfaction))


def zot_levels(max_delta, delta):

    '''
    Vectorised zone-of-tolerance level for arrays of tolerances and deltas.

    rho = delta / max_delta selects the zone: 5 when the demand is met,
    then 4, 3, 2 for rho up to 0.25, 0.5, 0.75 and 1 beyond.
    '''

    max_delta = np.asarray(max_delta, dtype=float)
    delta = np.asarray(delta, dtype=float)

    with np.errstate(divide='ignore', invalid='ignore'):
        rho = np.where(max_delta > 0.0, delta / np.where(max_delta > 0.0, max_delta, 1.0), np.inf)

    levels = 4 - np.searchsorted(ZOT_THRESHOLDS, rho, side='left')

    return np.where(delta <= 0.0, 5, levels).astype(int)


def zot_level(ctx, delta):

    if ctx.max_delta < 0:
        raise ValueError("max_delta must be non-negative.")

    return int(zot_levels(ctx.max_delta, delta))


class ZoneOfToleranceOracle:

    ''' Ground-truth satisfaction: the zone-of-tolerance rule applied per user. '''

    name = 'oracle'

    def __call__(self, ctx, delta):

        return zot_level(ctx, delta)

    def levels(self, contexts, deltas):

        return zot_levels([ctx.max_delta for ctx in contexts], deltas)


@dataclass
class Persona:

    '''
    Behavioural profile driving the context chain.

    Probability tables are nested dictionaries, e.g.
    location_transitions[time_period][from_place][to_place].
    Places mapped to False in fixed_places get a fresh random cell on every entry.
    '''

    name: str
    seed: int
    fixed_places: dict
    location_transitions: dict
    activities: dict
    activity_speed: dict
    applications: dict
    services: dict
    demand_range: dict
    min_rate_fraction: dict
    request_prob: dict
    location_tolerance: dict
    time_tolerance: dict
    application_tolerance: dict
    user_tolerance_range: tuple = (0.8, 1.2)
    full_rate_prob: float = 0.2
    max_shortfall_ratio: float = 1.2

    def __post_init__(self):

        rows = [('activities/' + k, v) for k, v in self.activities.items()]
        rows += [('applications/' + k, v) for k, v in self.applications.items()]
        rows += [('services/' + k, v) for k, v in self.services.items()]
        rows += [('transitions/{}/{}'.format(p, k), v)
                 for p, table in self.location_transitions.items() for k, v in table.items()]

        for name, row in rows:
            if any(p < 0.0 for p in row.values()) or abs(sum(row.values()) - 1.0) > 1e-9:
                raise DatasetError("Probability row {} does not sum to 1.".format(name))

        for factors in (self.location_tolerance, self.time_tolerance, self.application_tolerance, self.min_rate_fraction):
            if any(not 0.0 <= f <= 1.0 for f in factors.values()):
                raise DatasetError("Tolerance and min-rate fractions must lie in [0, 1].")

        if any(not 0.0 <= p <= 1.0 for p in self.request_prob.values()):
            raise DatasetError("Request probabilities must lie in [0, 1].")

        missing = set(TIME_PERIODS) - set(self.location_transitions)

        if missing:
            raise DatasetError("No location transitions for {}.".format(', '.join(sorted(missing))))

    @property
    def places(self):

        return list(self.fixed_places)

    def tolerance_fraction(self, location_name, time_period, application):

        fraction = (self.location_tolerance[location_name] * self.time_tolerance[time_period]
                    * self.application_tolerance[application])

        return float(np.clip(fraction, 0.0, 1.0))


def working_professional_persona(seed=7):

    ''' Weekday office worker: home and work at fixed cells, commuting in between. '''

    return Persona(
        name='wpp',
        seed=seed,
        fixed_places={'home': True, 'work': True, 'transit': False, 'other': False},
        location_transitions={
            'morning': {
                'home': {'home': 0.97, 'transit': 0.03},
                'work': {'work': 0.99, 'transit': 0.01},
                'transit': {'home': 0.01, 'work': 0.04, 'transit': 0.94, 'other': 0.01},
                'other': {'other': 0.96, 'transit': 0.04}},
            'afternoon': {
                'home': {'home': 0.97, 'transit': 0.02, 'other': 0.01},
                'work': {'work': 0.98, 'transit': 0.01, 'other': 0.01},
                'transit': {'home': 0.02, 'work': 0.03, 'transit': 0.93, 'other': 0.02},
                'other': {'other': 0.96, 'transit': 0.03, 'work': 0.01}},
            'evening': {
                'home': {'home': 0.99, 'transit': 0.005, 'other': 0.005},
                'work': {'work': 0.95, 'transit': 0.05},
                'transit': {'home': 0.05, 'transit': 0.93, 'other': 0.02},
                'other': {'other': 0.95, 'transit': 0.05}},
            'night': {
                'home': {'home': 0.995, 'other': 0.005},
                'work': {'work': 0.9, 'transit': 0.1},
                'transit': {'home': 0.1, 'transit': 0.9},
                'other': {'other': 0.9, 'transit': 0.1}}},
        activities={
            'home': {'sitting': 0.6, 'standing': 0.25, 'walking': 0.15},
            'work': {'sitting': 0.7, 'standing': 0.2, 'walking': 0.1},
            'transit': {'walking': 0.25, 'driving': 0.4, 'commuting': 0.35},
            'other': {'sitting': 0.3, 'standing': 0.2, 'walking': 0.3, 'running': 0.2}},
        activity_speed={
            'sitting': (0.0, 0.0),
            'standing': (0.0, 0.5),
            'walking': (3.0, 6.0),
            'running': (8.0, 14.0),
            'driving': (20.0, 80.0),
            'commuting': (10.0, 50.0)},
        applications={
            'home': {'video': 0.35, 'browsing': 0.25, 'social': 0.2, 'gaming': 0.1, 'voip': 0.1},
            'work': {'browsing': 0.3, 'email': 0.25, 'voip': 0.25, 'video': 0.1, 'social': 0.1},
            'transit': {'social': 0.3, 'music': 0.25, 'video': 0.2, 'browsing': 0.15, 'voip': 0.1},
            'other': {'social': 0.3, 'browsing': 0.25, 'video': 0.2, 'music': 0.15, 'voip': 0.1}},
        services={
            'video': {'sd streaming': 0.6, 'hd streaming': 0.4},
            'browsing': {'web page': 1.0},
            'social': {'feed': 0.7, 'photo upload': 0.3},
            'gaming': {'online game': 1.0},
            'voip': {'voice call': 0.6, 'video call': 0.4},
            'email': {'sync': 1.0},
            'music': {'audio streaming': 1.0}},
        demand_range={
            'sd streaming': (700, 1500),
            'hd streaming': (2500, 5000),
            'web page': (300, 1000),
            'feed': (200, 800),
            'photo upload': (500, 1500),
            'online game': (100, 500),
            'voice call': (64, 128),
            'video call': (500, 1500),
            'sync': (64, 300),
            'audio streaming': (128, 320)},
        min_rate_fraction={
            'sd streaming': 0.5,
            'hd streaming': 0.4,
            'web page': 0.2,
            'feed': 0.2,
            'photo upload': 0.1,
            'online game': 0.6,
            'voice call': 0.8,
            'video call': 0.6,
            'sync': 0.1,
            'audio streaming': 0.7},
        request_prob={'morning': 0.05, 'afternoon': 0.05, 'evening': 0.08, 'night': 0.02},
        location_tolerance={'home': 0.9, 'work': 0.5, 'transit': 0.7, 'other': 0.8},
        time_tolerance={'morning': 0.8, 'afternoon': 0.9, 'evening': 0.7, 'night': 1.0},
        application_tolerance={'video': 0.6, 'browsing': 0.9, 'social': 1.0, 'gaming': 0.4, 'voip': 0.3,
                               'email': 1.0, 'music': 0.7})


PERSONAS = {'wpp': working_professional_persona}


def persona_from_params(params):

    ''' Builds the persona named in the "persona" section. '''


    name = get_param(params, '/persona/name')

    if name not in PERSONAS:
        raise ConfigError("Unknown persona '{}', expected one of {}.".format(name, ', '.join(sorted(PERSONAS))))

    return PERSONAS[name](int(get_param(params, '/persona/seed')))


def time_period_of(hour):

    if 6 <= hour < 12:
        return 'morning'

    elif 12 <= hour < 17:
        return 'afternoon'

    elif 17 <= hour < 22:
        return 'evening'

    else:
        return 'night'


def speed_range_of(speed):

    if speed < 10.0:
        return 'low'

    elif speed <= 40.0:
        return 'med'

    else:
        return 'high'


def _draw(rng, table):

    keys = list(table)

    return keys[rng.choice(len(keys), p=[table[k] for k in keys])]


class _UserState:

    def __init__(self, persona, user_id, grid_size, dynamics_seed):

        identity = np.random.default_rng([persona.seed, user_id])
        self.rng = np.random.default_rng([dynamics_seed, user_id, 1])
        self.user_id = user_id
        self.grid_size = grid_size

        # Fixed places and tolerance multiplier belong to the user, not to the trajectory
        self.cells = dict((place, tuple(int(c) for c in identity.integers(0, grid_size, size=2)))
                          for place, fixed in persona.fixed_places.items() if fixed)
        self.multiplier = float(identity.uniform(*persona.user_tolerance_range))

        self.place = 'home' if 'home' in persona.fixed_places else persona.places[0]
        self.cell = self.cells.get(self.place) or self._random_cell()
        self.activity = None
        self.application = None
        self.service = None
        self.demand = None
        self.min_rate = None

    def _random_cell(self):

        return tuple(int(c) for c in self.rng.integers(0, self.grid_size, size=2))


class ContextStream:

    '''
    Multi-user context generator stepping one time slot at a time.

    Arguments:
        persona     - Persona driving every user
        num_users   - Number of users, identified 0..num_users-1
        start       - Timestamp of the first slot ("YYYY-mm-dd HH:MM:SS" or datetime)
        ts_seconds  - Time-slot length
        grid_size   - Side of the location grid
        seed        - Trajectory seed, defaults to the persona seed
    '''

    def __init__(self, persona, num_users=1, start='2018-01-10 06:00:00', ts_seconds=1.0, grid_size=100, seed=None):

        if num_users < 1:
            raise ValueError("num_users must be at least 1.")

        if ts_seconds <= 0.0:
            raise ValueError("ts_seconds must be positive.")

        self.persona = persona
        self.ts = timedelta(seconds=ts_seconds)
        self.clock = start if isinstance(start, datetime) else datetime.strptime(start, '%Y-%m-%d %H:%M:%S')
        self.users = [_UserState(persona, u, grid_size, persona.seed if seed is None else seed) for u in range(num_users)]
        self.slot = 0

    def __iter__(self):

        return self

    def __next__(self):

        return self.step()

    def step(self):

        ''' Advances one slot and returns one UserContext per user. '''

        period = time_period_of(self.clock.hour)
        contexts = [self._advance(user, period) for user in self.users]

        self.clock += self.ts
        self.slot += 1

        return contexts

    def _advance(self, user, period):

        persona = self.persona
        rng = user.rng
        moved = False

        if self.slot > 0:
            place = _draw(rng, persona.location_transitions[period][user.place])
            moved = place != user.place

            if moved:
                user.place = place
                user.cell = user.cells.get(place) or user._random_cell()

        if user.activity is None or moved:
            user.activity = _draw(rng, persona.activities[user.place])

        low, high = persona.activity_speed[user.activity]
        speed = float('{:.1f}'.format(rng.uniform(low, high)))

        request = 1 if self.slot == 0 else int(rng.random() < persona.request_prob[period])

        if request:
            user.application = _draw(rng, persona.applications[user.place])
            user.service = _draw(rng, persona.services[user.application])
            low, high = persona.demand_range[user.service]
            user.demand = int(rng.integers(low, high + 1))
            user.min_rate = int(round(persona.min_rate_fraction[user.service] * user.demand))

        fraction = persona.tolerance_fraction(user.place, period, user.application) * user.multiplier
        max_delta = int(round(fraction * user.demand))

        return UserContext(user_id=user.user_id,
                           date=self.clock.strftime('%Y-%m-%d'),
                           time=self.clock.strftime('%H:%M:%S'),
                           day=self.clock.strftime('%A'),
                           classified_day='weekend' if self.clock.weekday() >= 5 else 'weekday',
                           time_period=period,
                           location=user.cell,
                           location_name=user.place,
                           speed=speed,
                           speed_range=speed_range_of(speed),
                           activity=user.activity,
                           request_arrived=request,
                           application=user.application,
                           service=user.service,
                           demand_rate=user.demand,
                           min_rate=user.min_rate,
                           max_delta=max_delta)


def draw_given_rate(persona, ctx, rng):

    '''
    Draws the provided rate of one labelled sample.

    With probability full_rate_prob the demand is met; otherwise the shortfall is
    rho * max_delta with rho ~ U(0, max_shortfall_ratio), so every zone is visited.
    '''

    if rng.random() < persona.full_rate_prob:
        return ctx.demand_rate

    rho = rng.uniform(0.0, persona.max_shortfall_ratio)
    delta = min(int(round(rho * ctx.max_delta)), ctx.demand_rate)

    return ctx.demand_rate - delta


def generate_dataset(persona, num_slots, ts_seconds=1.0, num_users=1, start='2018-01-10 06:00:00', grid_size=100):

    '''
    Generates one labelled sample per time slot per user.

    The output is a pure function of the arguments.
    '''

    if num_slots < 1:
        raise ValueError("num_slots must be at least 1.")

    if not any(p > 0.0 for p in persona.request_prob.values()):
        raise DatasetError("empty dataset")

    stream = ContextStream(persona, num_users, start, ts_seconds, grid_size)
    rng = np.random.default_rng([persona.seed, 2])
    samples = []

    for _ in range(num_slots):
        for ctx in stream.step():
            given = draw_given_rate(persona, ctx, rng)
            delta = ctx.demand_rate - given
            samples.append(LabeledSample(context=ctx, given_rate=given, delta=delta, satisfaction=zot_level(ctx, delta)))

    logger.info("Dataset generated: %d samples, %d users", len(samples), num_users)

    return samples


def samples_to_frame(samples, include_user_id=True):

    rows = []

    for s in samples:
        c = s.context
        row = [c.date, c.time, c.day, c.classified_day, c.time_period, '[{}, {}]'.format(*c.location),
               c.location_name, '{:.1f}'.format(c.speed), c.speed_range, c.activity, c.request_arrived,
               c.application, c.service, c.demand_rate, c.min_rate, s.given_rate, s.delta, c.max_delta,
               '{:.1f}'.format(s.satisfaction)]
        rows.append([c.user_id] + row if include_user_id else row)

    columns = [USER_ID_COLUMN] + DATASET_COLUMNS if include_user_id else list(DATASET_COLUMNS)

    return pd.DataFrame(rows, columns=columns)


def write_csv(samples, path, include_user_id=True):

    samples_to_frame(samples, include_user_id).to_csv(path, index=False, lineterminator='\n')


@dataclass
class IngestReport:

    rows: int = 0
    skipped: int = 0
    reasons: list = field(default_factory=list)


def _kbps(value):

    rate = float(value)

    if not np.isfinite(rate) or not rate.is_integer():
        raise ValueError("rate {!r} is not an integer kbps value".format(value))

    return int(rate)


def _cell(value):

    parts = value.strip().strip('[]()').split(',')

    if len(parts) != 2:
        raise ValueError("location {!r} is not a grid cell".format(value))

    return tuple(int(p) for p in parts)


def _parse_row(row, user_id):

    context = UserContext(user_id=user_id,
                          date=row['Date'],
                          time=row['Time'],
                          day=row['Day'],
                          classified_day=row['Classified days'],
                          time_period=row['Time period'],
                          location=_cell(row['Location']),
                          location_name=row['Location name'],
                          speed=float(row['Speed']),
                          speed_range=row['Speed range'],
                          activity=row['Activity'],
                          request_arrived=int(row['Request arrived']),
                          application=row['Application'],
                          service=row['Service'],
                          demand_rate=_kbps(row['Demand rate']),
                          min_rate=_kbps(row['Min rate']),
                          max_delta=_kbps(row['Max Delta']))

    satisfaction = float(row['Satisfaction'])

    if not satisfaction.is_integer():
        raise ValueError("satisfaction {!r} is not a level".format(row['Satisfaction']))

    return LabeledSample(context=context, given_rate=_kbps(row['Given rate']), delta=_kbps(row['Delta']),
                         satisfaction=int(satisfaction))


def ingest_csv_with_report(path):

    '''
    Reads a satisfaction dataset CSV.

    Header names are matched case-insensitively and unknown columns are ignored.
    Rows that fail to parse or violate a sample invariant are skipped and counted.
    '''

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)

    except pd.errors.EmptyDataError:
        raise DatasetError("missing header") from None

    except (IOError, OSError) as e:
        raise DatasetError("Cannot read dataset {}: {}".format(path, e)) from e

    lookup = dict((str(c).strip().lower(), c) for c in frame.columns)
    missing = [name for name in DATASET_COLUMNS if name.lower() not in lookup]

    if missing:
        raise DatasetError("Dataset is missing column '{}'.".format(missing[0]))

    renamed = frame.rename(columns=dict((lookup[name.lower()], name) for name in DATASET_COLUMNS))
    user_column = lookup.get(USER_ID_COLUMN.lower())

    samples = []
    report = IngestReport(rows=len(renamed))

    for index, row in enumerate(renamed.to_dict('records')):
        try:
            user_id = int(row[user_column]) if user_column is not None else 0
            samples.append(_parse_row(row, user_id))

        except (ValueError, TypeError) as e:
            report.skipped += 1
            report.reasons.append('row {}: {}'.format(index + 2, e))

    if report.skipped:
        logger.warning("Skipped %d of %d dataset rows", report.skipped, report.rows)

    return samples, report


def ingest_csv(path):

    return ingest_csv_with_report(path)[0]
