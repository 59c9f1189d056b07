mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::t;
use happimeter_core::featurize::WeatherSource;
use happimeter_core::domain::LocationBucket;
use happimeter_server::weather::{CachedWeather, LiveProvider};

/// Serves one day of hourly archive data per request; temperature is the hour.
fn mock_archive(hits: Arc<AtomicUsize>, clouds: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut l = String::new();
                if reader.read_line(&mut l).unwrap() == 0 || l == "\r\n" {
                    break;
                }
            }
            hits.fetch_add(1, Ordering::SeqCst);
            let day = request_line
                .split(['?', '&', ' '])
                .find_map(|kv| kv.strip_prefix("start_date="))
                .unwrap()
                .to_string();
            assert!(request_line.contains("wind_speed_unit=ms"), "{request_line}");
            let times: Vec<String> = (0..24).map(|h| format!("\"{day}T{h:02}:00\"")).collect();
            let temps: Vec<String> = (0..24).map(|h| format!("{h}.5")).collect();
            let n = |v: &str| vec![v; 24].join(",");
            let body = format!(
                "{{\"hourly\":{{\"time\":[{}],\"temperature_2m\":[{}],\"relative_humidity_2m\":[{}],\"pressure_msl\":[{}],\"wind_speed_10m\":[{}],\"cloud_cover\":[{}]}}}}",
                times.join(","),
                temps.join(","),
                n("55"),
                n("1012.5"),
                n("2.25"),
                n(clouds),
            );
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    format!("http://{addr}/v1/archive")
}

#[test]
fn rows_with_missing_values_are_skipped() {
    let hits = Arc::new(AtomicUsize::new(0));
    let url = mock_archive(hits.clone(), "null");
    let live = LiveProvider::new(url, Duration::from_secs(5)).unwrap();
    let w = CachedWeather::new(Box::new(live));
    let b = LocationBucket::from_coords(47.37, 8.54);
    // clouds are null in the mock, so rows are unusable
    assert!(w.lookup(b, t("2017-05-01T10:20:00Z")).is_err());
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn live_rows_are_cached_for_the_whole_day() {
    let hits = Arc::new(AtomicUsize::new(0));
    let url = mock_archive(hits.clone(), "40");
    let w = CachedWeather::new(Box::new(LiveProvider::new(url, Duration::from_secs(5)).unwrap()));
    let b = LocationBucket::from_coords(47.37, 8.54);
    let o = w.lookup(b, t("2017-05-01T10:20:00Z")).unwrap();
    assert_eq!(o.temperature, 10.5);
    assert_eq!(o.pressure, 1012.5);
    assert_eq!(o.valid_at, t("2017-05-01T10:00:00Z"));
    assert_eq!(w.provider_calls(), 1);
    let again = w.lookup(b, t("2017-05-01T10:59:00Z")).unwrap();
    assert_eq!(again, o);
    assert_eq!(w.lookup(b, t("2017-05-01T23:00:00Z")).unwrap().temperature, 23.5);
    assert_eq!(w.provider_calls(), 1);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    w.lookup(b, t("2017-05-02T00:00:00Z")).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn unreachable_provider_is_an_error_and_not_cached() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let live = LiveProvider::new(format!("http://127.0.0.1:{port}/v1/archive"), Duration::from_secs(2)).unwrap();
    let w = CachedWeather::new(Box::new(live));
    let b = LocationBucket::from_coords(47.37, 8.54);
    let e = w.lookup(b, t("2017-05-01T10:00:00Z")).unwrap_err();
    assert!(e.0.contains("unreachable"), "{e}");
    assert!(w.lookup(b, t("2017-05-01T10:00:00Z")).is_err());
    assert_eq!(w.provider_calls(), 2);
}
