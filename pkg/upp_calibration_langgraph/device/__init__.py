from .simulator import (
    DeviceGroundTruth,
    ImperfectionConfig,
    InsertionLossReport,
    MeasurementRecord,
    OutputDistribution,
    SimulatedProcessor,
    device_document,
    frame_to_records,
    load_processor,
    read_device_public,
    read_measurement_log,
    records_to_frame,
    save_device,
    synth_device,
    write_measurement_log,
)
