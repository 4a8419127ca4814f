import math as m


def db_to_linear(value_db):

    ratio = 10.0 ** (value_db / 10.0)

    return ratio


def dbm_to_watts(value_dbm):

    ''' Converts a power (or power density) in dBm to watts. '''

    watts = db_to_linear(value_dbm) / 1000.0

    return watts


def watts_to_dbm(value_w):

    dbm = 10.0 * m.log10(value_w * 1000.0)

    return dbm
