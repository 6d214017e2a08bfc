use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use logstamp::digest::sha256;
use logstamp::tsa::{der, BackendError, ExternalTsaClient, FixedClock, HttpTransport, TimestampBackend, DEFAULT_POLICY_OID};

/// Serves one HTTP request, hands back (content type, body) and answers with
/// `status` and `reply`.
fn serve_once(status: u16, reply: Vec<u8>) -> (String, thread::JoinHandle<(String, Vec<u8>)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/tsa", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream);
        let (mut content_type, mut len) = (String::new(), 0usize);
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                match k.to_ascii_lowercase().as_str() {
                    "content-type" => content_type = v.trim().to_string(),
                    "content-length" => len = v.trim().parse().unwrap(),
                    _ => {}
                }
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let mut stream = reader.into_inner();
        write!(
            stream,
            "HTTP/1.1 {status} X\r\nContent-Type: application/timestamp-reply\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            reply.len()
        )
        .unwrap();
        stream.write_all(&reply).unwrap();
        (content_type, body)
    });
    (url, handle)
}

fn granted_response(status: u8) -> Vec<u8> {
    let token = der::seq(&[der::oid("1.2.840.113549.1.7.2").unwrap(), der::octets(b"signed-data")]);
    der::seq(&[der::seq(&[der::uint(&[status])]), token])
}

fn client(url: String) -> ExternalTsaClient<HttpTransport> {
    ExternalTsaClient::new(url, DEFAULT_POLICY_OID, Arc::new(FixedClock(1_634_000_000)), HttpTransport)
}

#[test]
fn granted_response_yields_verifiable_token() {
    let (url, server) = serve_once(200, granted_response(0));
    let digest = sha256(b"commitment");
    let token = client(url.clone()).request_timestamp(&digest).unwrap();
    let (content_type, body) = server.join().unwrap();

    assert_eq!(content_type, "application/timestamp-query");
    let (req, rest) = der::parse(&body).unwrap();
    assert!(rest.is_empty());
    assert_eq!(req.tag, der::TAG_SEQUENCE);
    assert!(body.windows(32).any(|w| w == digest.as_bytes()), "imprint missing from request");

    assert_eq!(token.attested_digest, digest);
    assert_eq!(token.attested_time, 1_634_000_000);
    let verifier = client(url);
    assert!(verifier.verify_token(&token, &digest));
    assert!(!verifier.verify_token(&token, &sha256(b"other")));
}

#[test]
fn rejection_status_is_reported() {
    let (url, server) = serve_once(200, granted_response(2));
    let err = client(url).request_timestamp(&sha256(b"x")).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, BackendError::Rejected(_)), "{err:?}");
}

#[test]
fn http_error_is_reported() {
    let (url, server) = serve_once(503, Vec::new());
    let err = client(url).request_timestamp(&sha256(b"x")).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, BackendError::Rejected(_)), "{err:?}");
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = client(format!("http://127.0.0.1:{port}/tsa"))
        .request_timestamp(&sha256(b"x"))
        .unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
}
